//! Front files: CSV with an `obj_0..obj_{k-1}` header, or a JSON array of
//! arrays. Both readers reject ragged rows and non-finite values.

use super::{pareto_filter, ParetoError, ParetoFront, ValueVector};

/// Plain decimal rendering with at least 17 significant digits, which
/// round-trips every finite `f64`.
pub fn format_decimal(v: f64) -> String {
    if v == 0.0 {
        return "0.0".to_string();
    }
    let magnitude = v.abs().log10().floor() as i64;
    let decimals = (17 - magnitude).max(1) as usize;
    format!("{v:.decimals$}")
}

pub fn front_to_csv(front: &ParetoFront) -> String {
    let k = front.dim().unwrap_or(0);
    let mut out = (0..k)
        .map(|i| format!("obj_{i}"))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for row in front.rows() {
        out.push_str(
            &row.iter()
                .map(|&x| format_decimal(x))
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push('\n');
    }
    out
}

/// Parses a front CSV. Rows must match the header width. The points are
/// Pareto-filtered on the way in.
pub fn front_from_csv(text: &str) -> Result<ParetoFront, ParetoError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(ParetoFront::empty());
    };
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    for (i, c) in columns.iter().enumerate() {
        if *c != format!("obj_{i}") {
            return Err(ParetoError::Parse(format!(
                "line 1: expected column obj_{i}, found {c:?}"
            )));
        }
    }
    let mut points = Vec::new();
    for (n, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(ParetoError::Parse(format!(
                "line {}: expected {} values, found {}",
                n + 1,
                columns.len(),
                cells.len()
            )));
        }
        let values = cells
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|e| ParetoError::Parse(format!("line {}: {c:?}: {e}", n + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let v = ValueVector::new(values)
            .map_err(|e| ParetoError::Parse(format!("line {}: {e}", n + 1)))?;
        points.push(v);
    }
    pareto_filter(&points)
}

pub fn front_to_json(front: &ParetoFront) -> String {
    serde_json::to_string(front).expect("fronts of finite values always serialize")
}

pub fn front_from_json(text: &str) -> Result<ParetoFront, ParetoError> {
    let rows: Vec<Vec<f64>> =
        serde_json::from_str(text).map_err(|e| ParetoError::Parse(e.to_string()))?;
    let mut points = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        if let Some(first) = points.first().map(ValueVector::dim) {
            if row.len() != first {
                return Err(ParetoError::Parse(format!(
                    "row {i}: expected {first} values, found {}",
                    row.len()
                )));
            }
        }
        points
            .push(ValueVector::new(row).map_err(|e| ParetoError::Parse(format!("row {i}: {e}")))?);
    }
    pareto_filter(&points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_layout() {
        let f = pareto_filter(&[ValueVector::new(vec![1.5, -2.0]).unwrap()]).unwrap();
        let csv = front_to_csv(&f);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("obj_0,obj_1"));
        let row = lines.next().unwrap();
        let first = row.split(',').next().unwrap();
        let digits = first.chars().filter(|c| c.is_ascii_digit()).count();
        assert!(digits >= 15, "{row}");
    }

    #[test]
    fn readers_reject_bad_input() {
        assert!(front_from_csv("obj_0,obj_1\n1,2\n3\n").is_err());
        assert!(front_from_csv("obj_0,obj_1\n1,NaN\n").is_err());
        assert!(front_from_csv("a,b\n1,2\n").is_err());
        assert!(front_from_json("[[1,2],[3]]").is_err());
        assert!(front_from_json("[[1,2],[3,").is_err());
        assert!(front_from_json("[[1,2,3]]").is_ok());
    }

    proptest! {
        #[test]
        fn round_trips_are_lossless(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 0..15)) {
            let pts: Vec<ValueVector> = rows.into_iter().map(|r| ValueVector::new(r).unwrap()).collect();
            let f = pareto_filter(&pts).unwrap();
            prop_assert_eq!(&front_from_csv(&front_to_csv(&f)).unwrap(), &f);
            prop_assert_eq!(&front_from_json(&front_to_json(&f)).unwrap(), &f);
        }
    }
}
