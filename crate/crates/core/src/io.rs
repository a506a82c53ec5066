//! File formats: network JSON, plot-ready CSV tables and dense matrices.
//! All writes go through a temporary file in the target directory and a
//! rename, so readers never see a half-written file.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use tempfile::NamedTempFile;

use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::probing::DensityScan;
use crate::spectral::{SampledSpectrum, SpectralComb};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp =
        NamedTempFile::new_in(dir).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| Error::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn load_network(path: &Path) -> Result<NetworkSpec> {
    NetworkSpec::from_json(&read(path)?)
}

pub fn save_network(spec: &NetworkSpec, path: &Path) -> Result<()> {
    let mut text = spec.to_json();
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn save_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Renders a CSV table with a header row.
pub fn csv_table<I>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

pub fn spectrum_csv(s: &SampledSpectrum) -> Result<Vec<u8>> {
    csv_table(
        &["omega", "J"],
        s.omega
            .iter()
            .zip(&s.j)
            .map(|(w, j)| vec![fmt_f64(*w), fmt_f64(*j)]),
    )
}

pub fn comb_csv(c: &SpectralComb) -> Result<Vec<u8>> {
    csv_table(
        &["Omega_i", "weight", "J_binned"],
        c.lines
            .iter()
            .map(|l| vec![fmt_f64(l.omega), fmt_f64(l.weight), fmt_f64(l.j_binned)]),
    )
}

pub fn scan_csv(s: &DensityScan) -> Result<Vec<u8>> {
    csv_table(
        &["omega_S", "J_est", "status"],
        s.omega.iter().zip(&s.j).zip(&s.status).map(|((w, j), st)| {
            vec![
                fmt_f64(*w),
                j.map(fmt_f64).unwrap_or_default(),
                st.as_str().to_string(),
            ]
        }),
    )
}

pub fn time_series_csv(t: &[f64], n: &[f64]) -> Result<Vec<u8>> {
    csv_table(
        &["t", "mean_n"],
        t.iter().zip(n).map(|(t, n)| vec![fmt_f64(*t), fmt_f64(*n)]),
    )
}

/// Dense row-major matrix; the header names the columns `c0, c1, ...`.
pub fn matrix_csv(m: &DMatrix<f64>) -> Result<Vec<u8>> {
    let header: Vec<String> = (0..m.ncols()).map(|c| format!("c{c}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_table(
        &header,
        m.row_iter()
            .map(|r| r.iter().map(|x| fmt_f64(*x)).collect()),
    )
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = read(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Schema(format!("row {}: '{f}' is not a number", line + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Schema(format!(
            "{} is not a square matrix",
            path.display()
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Long-format comparison `(i, j, estimate, truth, difference)` for
/// side-by-side heat maps.
pub fn difference_csv(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<Vec<u8>> {
    if est.shape() != truth.shape() {
        return Err(Error::Dimension(format!(
            "cannot compare {:?} with {:?}",
            est.shape(),
            truth.shape()
        )));
    }
    let (r, c) = est.shape();
    csv_table(
        &["i", "j", "estimate", "truth", "difference"],
        (0..r)
            .flat_map(|i| (0..c).map(move |j| (i, j)))
            .map(|(i, j)| {
                vec![
                    i.to_string(),
                    j.to_string(),
                    fmt_f64(est[(i, j)]),
                    fmt_f64(truth[(i, j)]),
                    fmt_f64(est[(i, j)] - truth[(i, j)]),
                ]
            }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate, Topology, TopologyRecipe};

    #[test]
    fn network_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        let rec = TopologyRecipe::new(
            Topology::SmallWorld {
                n: 20,
                h_chain: 0.2,
                h_shortcut: 0.1,
                n_shortcuts: 4,
            },
            3,
        );
        let spec = generate(&rec, 0.25).unwrap();
        save_network(&spec, &path).unwrap();
        assert_eq!(load_network(&path).unwrap(), spec);
    }

    #[test]
    fn edge_order_normalized() {
        let spec = NetworkSpec::from_json(
            r#"{"n": 3, "omega0": 0.25, "edges": [[2, 1, 0.1], [0, 1, 0.2]]}"#,
        )
        .unwrap();
        assert_eq!(spec.edges()[0].i, 0);
        assert_eq!((spec.edges()[1].i, spec.edges()[1].j), (1, 2));
    }

    #[test]
    fn schema_errors() {
        match NetworkSpec::from_json(r#"{"n": 2, "edges": []}"#) {
            Err(Error::Schema(m)) => assert!(m.contains("omega0"), "{m}"),
            other => panic!("{other:?}"),
        }
        match NetworkSpec::from_json(r#"{"n": 2, "omega0": 0.25, "edges": [[0, 0, 0.1]]}"#) {
            Err(Error::InvalidNetwork(m)) => assert!(m.contains("self-edge"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn floats_round_trip_through_text() {
        for x in [0.1, 1.0 / 3.0, 6.02e23, -2.5e-300, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn matrix_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let m = DMatrix::from_row_slice(2, 2, &[0.1, -1.0 / 3.0, -1.0 / 3.0, 7.0]);
        write_atomic(&path, &matrix_csv(&m).unwrap()).unwrap();
        assert_eq!(read_matrix_csv(&path).unwrap(), m);
    }
}
