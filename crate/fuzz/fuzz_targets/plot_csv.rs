#![no_main]

use libfuzzer_sys::fuzz_target;
use wavephase_cli::io::parse_table;
use wavephase_cli::plot::plot_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = parse_table(text) {
        let x = table.columns[0].clone();
        let ys: Vec<&str> = table.columns.iter().skip(1).map(String::as_str).collect();
        let svg = plot_csv(text, &x, &ys, "fuzz").expect("parsed table renders");
        assert!(svg.ends_with("</svg>\n"));
    }
});
