use super::VkgError;

/// Character cursor with 1-based line/column tracking.
#[derive(Debug, Clone)]
pub(crate) struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
    column: usize,
}

impl<'a> Cursor<'a> {
    pub fn new(text: &'a str) -> Self {
        Self {
            text,
            pos: 0,
            line: 1,
            column: 1,
        }
    }

    pub fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.text.len()
    }

    pub fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    pub fn location(&self) -> (usize, usize) {
        (self.line, self.column)
    }

    pub fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    pub fn advance(&mut self, bytes: usize) {
        let target = self.pos + bytes;
        while self.pos < target {
            self.bump();
        }
    }

    /// Skips whitespace and `#` comments.
    pub fn skip_ws(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('#') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    pub fn starts_with_keyword(&self, kw: &str) -> bool {
        let rest = self.rest();
        rest.len() >= kw.len()
            && rest.is_char_boundary(kw.len())
            && rest[..kw.len()].eq_ignore_ascii_case(kw)
            && !rest[kw.len()..]
                .chars()
                .next()
                .is_some_and(|c| c.is_alphanumeric() || c == '_')
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.starts_with_keyword(kw) {
            self.advance(kw.len());
            true
        } else {
            false
        }
    }

    pub fn eat_char(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn take_while<F: Fn(char) -> bool>(&mut self, f: F) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(&f) {
            self.bump();
        }
        &self.text[start..self.pos]
    }

    /// Short description of the upcoming token for error messages.
    pub fn found(&self) -> String {
        let rest = self.rest();
        if rest.is_empty() {
            return "end of input".to_string();
        }
        let token: String = rest
            .chars()
            .take_while(|c| !c.is_whitespace())
            .take(24)
            .collect();
        if token.is_empty() {
            format!("{:?}", rest.chars().next().unwrap_or(' '))
        } else {
            format!("`{token}`")
        }
    }

    pub fn error(&self, expected: impl Into<String>) -> VkgError {
        VkgError::Syntax {
            line: self.line,
            column: self.column,
            expected: expected.into(),
            found: self.found(),
        }
    }

    pub fn expect_char(&mut self, c: char) -> Result<(), VkgError> {
        if self.eat_char(c) {
            Ok(())
        } else {
            Err(self.error(format!("`{c}`")))
        }
    }

    /// Reads `<...>` and returns its contents.
    pub fn iri_ref(&mut self) -> Result<&'a str, VkgError> {
        self.expect_char('<')?;
        let body = self.take_while(|c| c != '>' && c != '\n');
        if !self.eat_char('>') {
            return Err(self.error("`>` closing the IRI"));
        }
        Ok(body)
    }

    /// Reads a double- or single-quoted string with backslash escapes.
    pub fn string_literal(&mut self) -> Result<String, VkgError> {
        let quote = match self.peek() {
            Some(q @ ('"' | '\'')) => q,
            _ => return Err(self.error("string literal")),
        };
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(self.error("closing quote")),
                Some(c) if c == quote => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some('r') => out.push('\r'),
                    Some('t') => out.push('\t'),
                    Some(c @ ('"' | '\'' | '\\')) => out.push(c),
                    _ => return Err(self.error("valid escape sequence")),
                },
                Some(c) => out.push(c),
            }
        }
    }
}

pub(crate) fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-')
}
