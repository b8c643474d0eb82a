use std::path::Path;

use cv2x_sim::parse_config;

#[test]
fn every_shipped_config_parses() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut labels = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let c = parse_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let name = path.file_stem().unwrap().to_str().unwrap().to_owned();
            labels.push((name, c.label()));
        }
    }
    labels.sort();
    let expected = [
        ("desk-26-20", "26-20"),
        ("desk-515-20", "515-20"),
        ("desk-off-10", "OFF-10"),
        ("desk-off-20", "OFF-20"),
    ];
    let got: Vec<_> = labels.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    assert_eq!(got, expected);
}
