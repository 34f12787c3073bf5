use msmgn::cli::KEYS;

fn read(rel: &str) -> String {
    std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../").to_string() + rel).unwrap()
}

#[test]
fn config_doc_lists_every_key_with_its_default() {
    let doc = read("docs/config.md");
    for (key, default, _) in KEYS {
        let row = doc
            .lines()
            .find(|l| l.starts_with(&format!("| `{key}` |")))
            .unwrap_or_else(|| panic!("docs/config.md is missing {key}"));
        if !default.is_empty() {
            assert!(row.contains(&format!("`{default}`")), "default of {key} out of date: {row}");
        }
    }
}

#[test]
fn formats_doc_lists_every_csv_header() {
    let doc = read("docs/formats.md");
    for header in [
        "edge_min,model,mps,schedule,mse1,mse10,mse50,sec_per_step,one_step_mse,nodes",
        "edge_min,model,step,mse",
        "step,loss,lr,seconds",
        "scenarios,pairs,mse",
        "n,lambda_n,power",
        "fine_nodes,fine_edges,coarse_nodes,coarse_edges,h,l,d,u,train",
    ] {
        assert!(doc.contains(header), "missing {header}");
    }
}
