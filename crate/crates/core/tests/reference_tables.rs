//! Printed precision/recall/F1 of the reference tables against their counts.

use std::path::Path;

use shrubmap::eval::metrics::percent_strings;

struct Row {
    id: String,
    counts: [u64; 3],
    printed: [f64; 3],
    flag: String,
}

fn rows() -> Vec<Row> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reference_tables.csv");
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            Row {
                id: format!("{}/{}", &r[0], &r[1]),
                counts: [2, 3, 4].map(|i| r[i].parse().unwrap()),
                printed: [5, 6, 7].map(|i| r[i].parse().unwrap()),
                flag: r[8].to_string(),
            }
        })
        .collect()
}

/// Plain floating-point formulas, independent of the integer rounding path.
fn float_oracle([tp, fp, fn_]: [u64; 3]) -> [f64; 3] {
    let (tp, fp, fn_) = (tp as f64, fp as f64, fn_ as f64);
    let p = tp / (tp + fp);
    let r = tp / (tp + fn_);
    [p, r, 2.0 * p * r / (p + r)].map(|v| (v * 10_000.0).round() / 100.0)
}

#[test]
fn unflagged_cells_match_within_a_hundredth() {
    let names = ["precision", "recall", "f1"];
    let mut checked = 0;
    for row in rows() {
        let exact = percent_strings(row.counts[0], row.counts[1], row.counts[2]);
        let oracle = float_oracle(row.counts);
        for k in 0..3 {
            let got: f64 = exact[k].parse().unwrap();
            assert!(
                (got - oracle[k]).abs() < 1e-9,
                "{} {}: {got} vs oracle {}",
                row.id,
                names[k],
                oracle[k]
            );
            if row.flag != names[k] {
                assert!(
                    (row.printed[k] - got).abs() <= 0.01 + 1e-9,
                    "{} {}: printed {} computed {got}",
                    row.id,
                    names[k],
                    row.printed[k]
                );
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 50);
}

#[test]
fn flagged_cell_is_the_only_mismatch() {
    let flagged: Vec<Row> = rows().into_iter().filter(|r| !r.flag.is_empty()).collect();
    assert_eq!(flagged.len(), 1);
    let r = &flagged[0];
    assert_eq!((r.id.as_str(), r.flag.as_str()), ("4/obia-zone2", "recall"));
    let exact = percent_strings(r.counts[0], r.counts[1], r.counts[2]);
    assert_eq!(exact[1], "51.22");
    assert!((r.printed[1] - 51.22).abs() > 0.01);
    // the printed F1 agrees with the computed recall, not the printed one
    assert_eq!(exact[2], "60.00");
}

#[test]
fn table_two_rows_are_ordered_by_window_size() {
    let sizes: Vec<u64> = rows()
        .iter()
        .filter(|r| r.id.starts_with("2/"))
        .map(|r| r.id[2..].parse().unwrap())
        .collect();
    assert_eq!(sizes, vec![385, 194, 129, 97, 77, 64, 55, 48, 42, 38]);
}
