//! Deterministic synthetic corpus: a PLM table, a qualification catalog,
//! ground-truth match labels and the ground-truth manufacturer rules.
//!
//! Components fall into three roles. *Never-qualified* components get a
//! package code no card uses. *Cluster members* share one
//! (package, subpackage, manufacturer) triple with a set of cards, so every
//! member has direct or by-similarity matches. *Alternative-only*
//! components reuse a cluster's package (and manufacturer, pitch, assembly)
//! under a fresh subpackage, so they only satisfy the relaxed rules.
//!
//! With `D`, `S`, `A` the configured averages over qualified components and
//! `C` cards, cluster size is `1 + S·N_q/C` and the member share of
//! qualified components is `(D+S)/(A+D+S)`; expected direct count per
//! qualified component is exactly `C/N_q`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, DatasetError};
use crate::domain::{canonical_manufacturer, PlmComponent, QualStatus, QualificationCard, RuleTable};
use crate::criteria::{fp_rule_holds, generic_rule_holds};

pub const FAMILIES: [&str; 6] = ["FP", "Hybrid", "Capacitor", "Resistor", "Inductor", "Diode"];

const SUFFIXES: [&str; 15] = [
    " Corp", " Corp.", " Corporation", " Inc.", " Inc", " Incorporated", " Inter.", " International",
    " Ltd", " Ltd.", " GmbH", " S.A.", " SA", " S.p.A.", " SpA",
];

const ASSEMBLY: [&str; 4] = ["SMD reflow", "Through-hole wave", "Hot soldering", "Hand soldering"];
const LEAD_FINISH: [&str; 4] = ["SnPb", "NiPdAu", "Au", "Sn"];
const RAW_MATERIAL: [&str; 4] = ["Ceramic", "Epoxy", "Polyimide", "Alumina"];
const QUAL_TYPES: [&str; 4] = ["Initial", "Extension", "Delta", "Requalification"];
const COATINGS: [&str; 3] = ["Parylene", "Silicone", "Acrylic"];
const SUBSTRATES: [&str; 3] = ["Polyimide", "FR4", "Ceramic"];
const FP_PITCH: [&str; 6] = ["0.5", "0.635", "0.65", "0.8", "1.0", "1.27"];
const OTHER_PITCH: [&str; 6] = ["1.27", "1.92", "2.2", "2.54", "3.81", "5.08"];
const ACQUIRED_STEMS: [&str; 8] = ["Nordtek", "Valcor", "Siltronix", "Amperon", "Kestrel", "Orvane", "Brisca", "Tessan"];

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("invalid corpus config: `{field}` {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub n_components: usize,
    pub n_qualifications: usize,
    pub seed: u64,
    pub never_qualified_fraction: f64,
    pub avg_direct: f64,
    pub avg_similarity: f64,
    pub avg_alternative: f64,
    pub manufacturer_variant_rate: f64,
    pub pn_missing_rate: f64,
    pub n_manufacturers: usize,
    /// Distinct raw manufacturer spellings, canonical names included.
    pub n_raw_variants: usize,
    /// Relative weight per family; missing families get weight 0.
    pub family_mix: BTreeMap<String, f64>,
    /// Per-manufacturer names unrelated to the canonical spelling
    /// (acquired brands), which lexical clustering cannot merge.
    pub acquired_aliases: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        let family_mix = [
            ("FP", 0.3),
            ("Hybrid", 0.1),
            ("Capacitor", 0.2),
            ("Resistor", 0.2),
            ("Inductor", 0.1),
            ("Diode", 0.1),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            n_components: 675,
            n_qualifications: 351,
            seed: 42,
            never_qualified_fraction: 0.1748,
            avg_direct: 0.63,
            avg_similarity: 7.98,
            avg_alternative: 2.23,
            manufacturer_variant_rate: 0.5,
            pn_missing_rate: 0.02,
            n_manufacturers: 50,
            n_raw_variants: 466,
            family_mix,
            acquired_aliases: 0,
        }
    }
}

impl CorpusConfig {
    /// Defaults with the card count chosen so the direct average over
    /// qualified components matches `avg_direct`.
    pub fn profile(n_components: usize, seed: u64) -> Self {
        let mut cfg = Self {
            n_components,
            seed,
            ..Self::default()
        };
        cfg.n_qualifications = cfg.cards_for_direct_average().max(1);
        cfg
    }

    pub fn cards_for_direct_average(&self) -> usize {
        let n_never = (self.never_qualified_fraction * self.n_components as f64).round() as usize;
        let n_q = self.n_components.saturating_sub(n_never);
        (self.avg_direct * n_q as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |field, reason: &str| {
            Err(CorpusError::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if self.n_components == 0 {
            return bad("n_components", "must be positive");
        }
        if self.n_qualifications == 0 {
            return bad("n_qualifications", "must be positive");
        }
        if self.n_manufacturers == 0 {
            return bad("n_manufacturers", "must be positive");
        }
        if self.n_manufacturers > 2000 {
            return bad("n_manufacturers", "must be at most 2000");
        }
        if self.n_raw_variants < self.n_manufacturers {
            return bad("n_raw_variants", "must be at least n_manufacturers");
        }
        if self.n_raw_variants > self.n_manufacturers * 40 {
            return bad("n_raw_variants", "must be at most 40 per manufacturer");
        }
        for (field, v) in [
            ("never_qualified_fraction", self.never_qualified_fraction),
            ("manufacturer_variant_rate", self.manufacturer_variant_rate),
            ("pn_missing_rate", self.pn_missing_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(field, "must lie in [0, 1]");
            }
        }
        for (field, v) in [
            ("avg_direct", self.avg_direct),
            ("avg_similarity", self.avg_similarity),
            ("avg_alternative", self.avg_alternative),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(field, "must be finite and non-negative");
            }
        }
        for (family, w) in &self.family_mix {
            if !FAMILIES.contains(&family.as_str()) {
                return bad("family_mix", &format!("has unknown family `{family}`"));
            }
            if !w.is_finite() || *w < 0.0 {
                return bad("family_mix", &format!("weight for `{family}` must be non-negative"));
            }
        }
        if self.family_mix.values().sum::<f64>() <= 0.0 {
            return bad("family_mix", "needs at least one positive weight");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthMatches {
    pub direct: BTreeSet<String>,
    pub similarity: BTreeSet<String>,
    pub alternative: BTreeSet<String>,
}

impl TruthMatches {
    pub fn is_empty(&self) -> bool {
        self.direct.is_empty() && self.similarity.is_empty() && self.alternative.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Component part number → labelled matches.
    pub matches: BTreeMap<String, TruthMatches>,
    #[serde(skip)]
    pub rules: RuleTable,
    pub pn_by_qual: BTreeMap<String, Option<String>>,
}

impl GroundTruth {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&serde_json::to_value(self).expect("truth serializes"))
            .expect("truth serializes");
        s.push('\n');
        s
    }

    pub fn qualified_components(&self) -> impl Iterator<Item = (&String, &TruthMatches)> {
        self.matches.iter().filter(|(_, m)| !m.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub plm: Vec<PlmComponent>,
    pub qc: Vec<QualificationCard>,
    pub truth: GroundTruth,
}

/// Labels every component by brute force over the given truth rules and
/// card part numbers.
pub fn label(
    plm: &[PlmComponent],
    qc: &[QualificationCard],
    rules: &RuleTable,
    pn_by_qual: &BTreeMap<String, Option<String>>,
) -> BTreeMap<String, TruthMatches> {
    let mut by_package: HashMap<&str, Vec<&QualificationCard>> = HashMap::new();
    for card in qc {
        by_package.entry(card.package_code.as_str()).or_default().push(card);
    }
    let mut out: BTreeMap<String, TruthMatches> = BTreeMap::new();
    for c in plm {
        let entry = out.entry(c.part_number.clone()).or_default();
        let cards = by_package.get(c.package_code.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let mfr = canonical_manufacturer(&c.manufacturer_name, rules);
        for q in cards {
            let triple = q.subpackage_code == c.subpackage_code
                && canonical_manufacturer(&q.manufacturer_name, rules) == mfr;
            if !triple {
                continue;
            }
            match pn_by_qual.get(&q.number).cloned().flatten() {
                Some(pn) if pn == c.part_number => {
                    entry.direct.insert(q.number.clone());
                }
                Some(_) => {
                    entry.similarity.insert(q.number.clone());
                }
                None => {}
            }
        }
    }
    for c in plm {
        let entry = out.get_mut(&c.part_number).expect("entry created above");
        if !entry.direct.is_empty() || !entry.similarity.is_empty() {
            continue;
        }
        let cards = by_package.get(c.package_code.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        for q in cards {
            let ok = if c.family == "FP" {
                fp_rule_holds(c, q) == Some(true)
            } else {
                generic_rule_holds(c, q, rules)
            };
            if ok {
                entry.alternative.insert(q.number.clone());
            }
        }
    }
    out
}

struct Cluster {
    family: &'static str,
    package: String,
    subpackage: String,
    manufacturer: usize,
    pitch: Decimal,
    pin: i64,
    assembly: &'static str,
    members: Vec<String>,
}

struct Gen {
    rng: ChaCha8Rng,
    used_pn: BTreeSet<u32>,
    package_counter: BTreeMap<&'static str, usize>,
    subpackage_counter: usize,
}

impl Gen {
    fn pn(&mut self) -> String {
        loop {
            let n: u32 = self.rng.gen_range(1_000_000..10_000_000);
            if self.used_pn.insert(n) {
                return format!("P{n}");
            }
        }
    }

    fn package(&mut self, family: &'static str) -> String {
        let prefix = match family {
            "FP" => "FP",
            "Hybrid" => "HY",
            "Capacitor" => "C",
            "Resistor" => "R",
            "Inductor" => "L",
            _ => "D",
        };
        let n = self.package_counter.entry(family).or_insert(0);
        *n += 1;
        format!("{prefix}{n}")
    }

    fn subpackage(&mut self) -> String {
        self.subpackage_counter += 1;
        let letter = (b'a' + (self.subpackage_counter % 26) as u8) as char;
        format!("{letter}{}", self.subpackage_counter)
    }

    fn family(&mut self, mix: &[(&'static str, f64)]) -> &'static str {
        let total: f64 = mix.iter().map(|(_, w)| w).sum();
        let mut x = self.rng.gen::<f64>() * total;
        for (f, w) in mix {
            if x < *w {
                return f;
            }
            x -= w;
        }
        mix.iter().rev().find(|(_, w)| *w > 0.0).map(|(f, _)| *f).unwrap_or("FP")
    }

    fn pick<T: Copy>(&mut self, xs: &[T]) -> T {
        *xs.choose(&mut self.rng).expect("nonempty")
    }

    fn pitch(&mut self, family: &str) -> Decimal {
        let text = if family == "FP" { self.pick(&FP_PITCH) } else { self.pick(&OTHER_PITCH) };
        text.parse().expect("pitch literal")
    }

    fn maybe<T>(&mut self, p_present: f64, value: T) -> Option<T> {
        if self.rng.gen_bool(p_present) {
            Some(value)
        } else {
            None
        }
    }
}

fn manufacturer_names(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let reserved: BTreeSet<String> = [
        "corp", "corporation", "inc", "incorporated", "inter", "international", "ltd", "gmbh", "sa", "spa",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut names = vec!["ABC".to_string(), "XYZ".to_string()];
    names.truncate(n);
    let mut seen: BTreeSet<String> = names.iter().cloned().collect();
    while names.len() < n {
        let len = rng.gen_range(3..=4);
        let name: String = (0..len).map(|_| (b'A' + rng.gen_range(0..26)) as char).collect();
        if reserved.contains(&name.to_lowercase()) || !seen.insert(name.clone()) {
            continue;
        }
        names.push(name);
    }
    names
}

fn variant_pool(canonical: &str) -> Vec<String> {
    let mut pool = BTreeSet::new();
    for suffix in SUFFIXES {
        let base = format!("{canonical}{suffix}");
        pool.insert(base.to_lowercase());
        pool.insert(base.to_uppercase());
        pool.insert(base);
    }
    pool.insert(canonical.to_lowercase());
    pool.remove(canonical);
    pool.into_iter().collect()
}

fn note(g: &mut Gen, pn: Option<&str>, package: &str, second_pn: Option<&str>) -> String {
    let lo = g.rng.gen_range(1..4);
    let standoff = format!("0.{lo}\u{2013}0.{} mm", lo + 1);
    let Some(pn) = pn else {
        let templates = [
            format!("{package} mounted on double pad, soldered in HS with a stand-off of {standoff}"),
            format!("Legacy record for {package}; reference lost during migration, see archived file"),
            format!("Component on {package} footprint, hot soldering with stand-off {standoff} on polyimide"),
            format!("Qualified together with the {package} family batch, no reference recorded"),
        ];
        let i = g.rng.gen_range(0..templates.len());
        return templates[i].clone();
    };
    let templates = [
        format!("R1 (pn {pn}) double component soldered on double pad, soldered in HS with a stand-off of {standoff} on polyimide"),
        format!("pn {pn} mounted on {package}, reflow profile B, stand-off {standoff}"),
        format!("Qualification of {package} for pn {pn}; visual inspection passed"),
        format!("Ref. pn {pn} -- assembled on {package} with stand-off {standoff}"),
        format!("Tested lot of pn {pn}, thermal cycling 500 cycles, no cracks"),
        format!("{package} package (pn {pn}) hand soldered, stand-off {standoff}"),
        format!("Extension to pn {pn} after supplier change on {package}"),
        format!("C4 (pn {pn}) single component, soldered in HS on ceramic, stand-off {standoff}"),
        format!("See pn {pn}: conformal coating applied after reflow"),
        format!("Mounting trial on {package}; pn {pn}; stand-off {standoff}"),
        format!("Delta qualification for pn {pn}, vibration test only"),
        format!("Board level test, {package}, pn {pn}, polyimide substrate"),
    ];
    let mut text = templates[g.rng.gen_range(0..templates.len())].clone();
    if let Some(other) = second_pn {
        text.push_str(&format!("; replaces pn {other}"));
    }
    text
}

fn split_even(total: usize, parts: usize) -> Vec<usize> {
    if parts == 0 {
        return Vec::new();
    }
    (0..parts).map(|i| total / parts + usize::from(i < total % parts)).collect()
}

fn exact_subset(rng: &mut ChaCha8Rng, n: usize, rate: f64) -> BTreeSet<usize> {
    let k = ((rate * n as f64).round() as usize).min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.into_iter().take(k).collect()
}

/// Generates a corpus; a pure function of the config.
pub fn generate(cfg: &CorpusConfig) -> Result<Corpus, CorpusError> {
    cfg.validate()?;
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        used_pn: BTreeSet::new(),
        package_counter: BTreeMap::new(),
        subpackage_counter: 0,
    };
    let mix: Vec<(&'static str, f64)> = FAMILIES
        .iter()
        .map(|f| (*f, cfg.family_mix.get(*f).copied().unwrap_or(0.0)))
        .collect();

    let manufacturers = manufacturer_names(&mut g.rng, cfg.n_manufacturers);
    let per_mfr = split_even(cfg.n_raw_variants - cfg.n_manufacturers, cfg.n_manufacturers);
    let mut variants: Vec<Vec<String>> = Vec::with_capacity(manufacturers.len());
    let mut rule_rows: Vec<(String, String)> = Vec::new();
    for (i, canonical) in manufacturers.iter().enumerate() {
        let mut pool = variant_pool(canonical);
        pool.shuffle(&mut g.rng);
        let mut chosen: Vec<String> = Vec::new();
        if i < cfg.acquired_aliases.min(manufacturers.len()) {
            chosen.push(format!("{} {}", ACQUIRED_STEMS[i % ACQUIRED_STEMS.len()], i + 1));
        }
        chosen.extend(pool.into_iter().take(per_mfr[i].saturating_sub(chosen.len())));
        rule_rows.push((canonical.clone(), canonical.clone()));
        for v in &chosen {
            rule_rows.push((v.clone(), canonical.clone()));
        }
        variants.push(chosen);
    }
    let rules = RuleTable::from_rows(rule_rows).expect("generated rules are consistent");

    let n = cfg.n_components;
    let c = cfg.n_qualifications;
    let n_never = ((cfg.never_qualified_fraction * n as f64).round() as usize).min(n);
    let n_q = n - n_never;
    let (d, s, a) = (cfg.avg_direct, cfg.avg_similarity, cfg.avg_alternative);
    let sym_share = if d + s + a > 0.0 { (d + s) / (d + s + a) } else { 1.0 };
    let mut n_sym = if n_q == 0 { 0 } else { ((sym_share * n_q as f64).round() as usize).clamp(1, n_q) };
    let mut clusters: Vec<Cluster> = Vec::new();
    if n_sym > 0 {
        let m = 1.0 + s * n_q as f64 / c as f64;
        let k = ((n_sym as f64 / m).round() as usize).clamp(1, c.min(n_sym));
        for size in split_even(n_sym, k) {
            let family = g.family(&mix);
            let package = g.package(family);
            let subpackage = g.subpackage();
            let manufacturer = g.rng.gen_range(0..manufacturers.len());
            let pitch = g.pitch(family);
            let pin = g.rng.gen_range(80..400);
            let assembly = g.pick(&ASSEMBLY);
            let members = (0..size).map(|_| g.pn()).collect();
            clusters.push(Cluster {
                family,
                package,
                subpackage,
                manufacturer,
                pitch,
                pin,
                assembly,
                members,
            });
        }
    } else {
        n_sym = 0;
    }
    let n_alt = n_q - n_sym;

    let mut plm: Vec<PlmComponent> = Vec::with_capacity(n);
    let physical = |g: &mut Gen, comp: &mut PlmComponent, assembly: &str| {
        let lead = g.pick(&LEAD_FINISH).to_string();
        comp.lead_finish = g.maybe(0.9, lead);
        let raw = g.pick(&RAW_MATERIAL).to_string();
        comp.raw_material = g.maybe(0.9, raw);
        let dims: Vec<Decimal> = (0..3).map(|_| Decimal::new(g.rng.gen_range(10..400), 1)).collect();
        comp.package_length = g.maybe(0.95, dims[0]);
        comp.package_width = g.maybe(0.95, dims[1]);
        comp.package_height = g.maybe(0.95, dims[2]);
        comp.assembly_type = Some(assembly.to_string());
        let gen_pn = format!("G{:05}", g.rng.gen_range(0..100_000));
        comp.generic_pn = g.maybe(0.9, gen_pn);
    };

    for cl in &clusters {
        for pn in &cl.members {
            let mut comp = PlmComponent::new(
                pn.clone(),
                cl.package.clone(),
                cl.subpackage.clone(),
                manufacturers[cl.manufacturer].clone(),
                cl.family,
            );
            comp.pitch = Some(cl.pitch);
            comp.pin_dimension = Some(Decimal::from(cl.pin));
            physical(&mut g, &mut comp, cl.assembly);
            plm.push(comp);
        }
    }
    for _ in 0..n_alt {
        let ci = g.rng.gen_range(0..clusters.len());
        let delta = g.rng.gen_range(-2..=2);
        let pn = g.pn();
        let subpackage = g.subpackage();
        let cl = &clusters[ci];
        let mut comp = PlmComponent::new(
            pn,
            cl.package.clone(),
            subpackage,
            manufacturers[cl.manufacturer].clone(),
            cl.family,
        );
        comp.pitch = Some(cl.pitch);
        comp.pin_dimension = Some(Decimal::from(cl.pin + delta));
        let assembly = cl.assembly;
        physical(&mut g, &mut comp, assembly);
        plm.push(comp);
    }
    for _ in 0..n_never {
        let family = g.family(&mix);
        let package = g.package(family);
        let subpackage = g.subpackage();
        let mfr = manufacturers[g.rng.gen_range(0..manufacturers.len())].clone();
        let pn = g.pn();
        let mut comp = PlmComponent::new(pn, package, subpackage, mfr, family);
        comp.pitch = Some(g.pitch(family));
        comp.pin_dimension = Some(Decimal::from(g.rng.gen_range(80..400)));
        let assembly = g.pick(&ASSEMBLY);
        physical(&mut g, &mut comp, assembly);
        plm.push(comp);
    }

    // Card → cluster assignment: one per cluster, the rest spread evenly.
    let mut card_cluster: Vec<Option<usize>> = Vec::with_capacity(c);
    if clusters.is_empty() {
        card_cluster.resize(c, None);
    } else {
        for (ci, count) in split_even(c, clusters.len()).into_iter().enumerate() {
            card_cluster.extend(std::iter::repeat(Some(ci)).take(count));
        }
        card_cluster.shuffle(&mut g.rng);
    }
    let variant_cards = exact_subset(&mut g.rng, c, cfg.manufacturer_variant_rate);
    let missing_cards = exact_subset(&mut g.rng, c, cfg.pn_missing_rate);
    let mut variant_cursor = vec![0usize; manufacturers.len()];
    let all_pns: Vec<String> = plm.iter().map(|p| p.part_number.clone()).collect();

    let mut qc = Vec::with_capacity(c);
    let mut pn_by_qual = BTreeMap::new();
    for (i, assignment) in card_cluster.iter().enumerate() {
        let number = format!("qc{}", i + 1);
        let status = {
            let x: f64 = g.rng.gen();
            match x {
                x if x < 0.6 => QualStatus::Closed,
                x if x < 0.8 => QualStatus::Ongoing,
                x if x < 0.9 => QualStatus::Failed,
                _ => QualStatus::Obsolete,
            }
        };
        let (package, subpackage, mfr_idx, truth_pn, family, pitch, pin, assembly) = match assignment {
            Some(ci) => {
                let cl = &clusters[*ci];
                let pn = g.pick(&cl.members.iter().collect::<Vec<_>>()).clone();
                let delta = g.rng.gen_range(-2..=2);
                (
                    cl.package.clone(),
                    cl.subpackage.clone(),
                    cl.manufacturer,
                    Some(pn),
                    cl.family,
                    cl.pitch,
                    cl.pin + delta,
                    cl.assembly,
                )
            }
            None => {
                let family = g.family(&mix);
                let package = g.package(family);
                let pitch = g.pitch(family);
                (
                    package,
                    g.subpackage(),
                    g.rng.gen_range(0..manufacturers.len()),
                    None,
                    family,
                    pitch,
                    g.rng.gen_range(80..400),
                    g.pick(&ASSEMBLY),
                )
            }
        };
        let manufacturer = if variant_cards.contains(&i) && !variants[mfr_idx].is_empty() {
            let vs = &variants[mfr_idx];
            let v = vs[variant_cursor[mfr_idx] % vs.len()].clone();
            variant_cursor[mfr_idx] += 1;
            v
        } else {
            manufacturers[mfr_idx].clone()
        };
        let second = if truth_pn.is_some() && g.rng.gen_bool(0.1) && all_pns.len() > 1 {
            Some(g.pick(&all_pns.iter().collect::<Vec<_>>()).clone())
        } else {
            None
        };
        let note_pn = if missing_cards.contains(&i) { None } else { truth_pn.as_deref() };
        let notes = note(&mut g, note_pn, &package, note_pn.and(second.as_deref()));
        let mut card = QualificationCard::new(number.clone(), package, subpackage, manufacturer, status, notes);
        let qual_type = g.pick(&QUAL_TYPES).to_string();
        card.qualification_type = g.maybe(0.97, qual_type);
        card.description = g.maybe(0.97, format!("{family} qualification, {assembly}"));
        let doc = format!("DOC-{:05}", g.rng.gen_range(0..100_000));
        card.documentation = g.maybe(0.97, doc);
        let coating = g.pick(&COATINGS).to_string();
        card.conformal_coating = g.maybe(0.97, coating);
        let substrate = g.pick(&SUBSTRATES).to_string();
        card.substrate_material = g.maybe(0.97, substrate);
        card.assembly_type = Some(assembly.to_string());
        card.pitch = Some(pitch);
        card.pin_dimension = Some(Decimal::from(pin));
        card.family = Some(family.to_string());
        pn_by_qual.insert(number, truth_pn);
        qc.push(card);
    }

    plm.sort_by(|x, y| x.part_number.cmp(&y.part_number));
    let matches = label(&plm, &qc, &rules, &pn_by_qual);
    Ok(Corpus {
        plm,
        qc,
        truth: GroundTruth {
            matches,
            rules,
            pn_by_qual,
        },
    })
}

/// The three-row example tables, with notes carrying each card's PN and
/// the manufacturer rules that reconcile the spellings.
pub fn sample_fixture() -> Corpus {
    let rows = [
        ("P1111111", "FP1", "a1", "ABC", "Hybrid", "1.27"),
        ("P2222222", "C2", "x2", "XYZ", "Capacitor", "2.2"),
        ("P3333333", "R1", "a3", "ABC", "Resistor", "1.92"),
    ];
    let plm: Vec<PlmComponent> = rows
        .iter()
        .map(|(pn, pkg, spkg, mfr, fam, pitch)| {
            let mut c = PlmComponent::new(*pn, *pkg, *spkg, *mfr, *fam);
            c.pitch = Some(pitch.parse().expect("pitch literal"));
            c
        })
        .collect();
    let cards = [
        ("qc1", "FP1", "a1", "ABC Corp", QualStatus::Closed, "Hybrid (pn P1111111) reflow soldered on FP1"),
        ("qc2", "C2", "x2", "XYZ Inc.", QualStatus::Closed, "pn P2222222 mounted on C2, stand-off 0.2\u{2013}0.3 mm"),
        (
            "qc3",
            "R1",
            "a3",
            "ABC Inter.",
            QualStatus::Ongoing,
            "R1 (pn P3333333) double component soldered on double pad, soldered in HS (Hot Soldering) with a stand-off of 0.2\u{2013}0.3 mm on polyimide",
        ),
    ];
    let qc: Vec<QualificationCard> = cards
        .iter()
        .map(|(n, pkg, spkg, mfr, st, notes)| QualificationCard::new(*n, *pkg, *spkg, *mfr, *st, *notes))
        .collect();
    let rules = RuleTable::from_rows([
        ("ABC", "ABC"),
        ("ABC Corp", "ABC"),
        ("ABC Inter.", "ABC"),
        ("XYZ", "XYZ"),
        ("XYZ Inc.", "XYZ"),
    ])
    .expect("fixture rules");
    let pn_by_qual: BTreeMap<String, Option<String>> = [("qc1", "P1111111"), ("qc2", "P2222222"), ("qc3", "P3333333")]
        .iter()
        .map(|(q, p)| (q.to_string(), Some(p.to_string())))
        .collect();
    let matches = label(&plm, &qc, &rules, &pn_by_qual);
    Corpus {
        plm,
        qc,
        truth: GroundTruth {
            matches,
            rules,
            pn_by_qual,
        },
    }
}

pub const PLM_FILE: &str = "plm.csv";
pub const QC_FILE: &str = "qc.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const TRUTH_RULES_FILE: &str = "truth_rules.csv";

/// Writes `plm.csv`, `qc.csv`, `truth.json` and `truth_rules.csv`.
pub fn emit(corpus: &Corpus, out_dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    fs::create_dir_all(out_dir).map_err(|e| DatasetError::io(out_dir, e))?;
    let plm = out_dir.join(PLM_FILE);
    let qc = out_dir.join(QC_FILE);
    let truth = out_dir.join(TRUTH_FILE);
    let rules = out_dir.join(TRUTH_RULES_FILE);
    dataset::save_plm(&plm, &corpus.plm)?;
    dataset::save_qc(&qc, &corpus.qc)?;
    fs::write(&truth, corpus.truth.to_json()).map_err(|e| DatasetError::io(&truth, e))?;
    dataset::save_rules(&rules, &corpus.truth.rules)?;
    Ok(vec![plm, qc, truth, rules])
}

/// Reads `truth.json` and, when present beside it, `truth_rules.csv`.
pub fn load_truth(path: &Path) -> Result<GroundTruth, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    let mut truth = GroundTruth::from_json(&text)
        .map_err(|e| DatasetError::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
    let rules = path.with_file_name(TRUTH_RULES_FILE);
    if rules.exists() {
        truth.rules = dataset::load_rules(&rules)?;
    }
    Ok(truth)
}
