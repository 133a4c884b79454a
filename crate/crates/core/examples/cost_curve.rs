use qualkg::cost::CostModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = CostModel::default();
    let summary = model.summary();
    println!("{}", serde_json::to_string_pretty(&summary)?);
    model.write_csv(std::io::stdout().lock(), 1000, 100)?;
    Ok(())
}
