//! CSV and JSON persistence.
//!
//! Matrices are CSV files with a header row. Numbers are written with 17
//! significant digits so a save/load cycle reproduces every `f64` exactly.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{
    ColumnLabel, ConfoundEncoder, ConfoundKind, ConfoundSpec, EncodedConfounds, FactorModel,
    MaskedMatrix, RawColumnData, RawConfound,
};
use crate::error::{IcqfError, Result};

/// `%.17g`-style formatting: shortest of fixed or scientific notation with
/// 17 significant digits and trailing zeros removed.
pub fn format_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        format!("{}e{}", strip_zeros(mantissa), exp)
    } else {
        let decimals = (16 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn parse_f64(cell: &str, row: usize, col: usize) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| IcqfError::BadCell {
        row,
        col,
        value: cell.to_string(),
    })
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| IcqfError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| IcqfError::io(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(file))
}

/// Reads a response matrix. The header row supplies question identifiers;
/// cells equal to `missing_token` are unobserved.
pub fn load_masked_matrix(path: impl AsRef<Path>, missing_token: &str) -> Result<MaskedMatrix> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let width = header.len();
    let mut values = Vec::new();
    let mut observed = Vec::new();
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != width {
            return Err(IcqfError::NotRectangular {
                row: i,
                found: record.len(),
                expected: width,
            });
        }
        for (j, cell) in record.iter().enumerate() {
            if cell == missing_token {
                values.push(f64::NAN);
                observed.push(false);
            } else {
                let v = parse_f64(cell, i, j)?;
                if !v.is_finite() {
                    return Err(IcqfError::BadCell {
                        row: i,
                        col: j,
                        value: cell.to_string(),
                    });
                }
                values.push(v);
                observed.push(true);
            }
        }
        rows += 1;
    }
    let values = Array2::from_shape_vec((rows, width), values)
        .map_err(|e| IcqfError::Dimension(e.to_string()))?;
    let observed = Array2::from_shape_vec((rows, width), observed)
        .map_err(|e| IcqfError::Dimension(e.to_string()))?;
    // Coverage is checked before construction so that an all-missing file
    // reports the empty row/column rather than an empty mask.
    for (i, row) in observed.rows().into_iter().enumerate() {
        if row.iter().all(|&o| !o) {
            return Err(IcqfError::EmptyRow(i));
        }
    }
    for (j, col) in observed.columns().into_iter().enumerate() {
        if col.iter().all(|&o| !o) {
            return Err(IcqfError::EmptyColumn(j));
        }
    }
    MaskedMatrix::new(values, observed)?.with_column_ids(header)
}

/// Writes a response matrix in the format read by [`load_masked_matrix`].
pub fn save_masked_matrix(data: &MaskedMatrix, path: impl AsRef<Path>, missing_token: &str) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(data.column_ids())?;
    for i in 0..data.nrows() {
        let row: Vec<String> = (0..data.ncols())
            .map(|j| data.get(i, j).map_or_else(|| missing_token.to_string(), format_f64))
            .collect();
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| IcqfError::io(path.as_ref(), e))?;
    Ok(())
}

/// Writes a dense matrix with the given column header.
pub fn save_matrix(path: impl AsRef<Path>, header: &[String], mat: &Array2<f64>) -> Result<()> {
    if header.len() != mat.ncols() {
        return Err(IcqfError::Dimension(format!(
            "{} header names for {} columns",
            header.len(),
            mat.ncols()
        )));
    }
    let mut w = writer(path.as_ref())?;
    w.write_record(header)?;
    for row in mat.rows() {
        w.write_record(row.iter().map(|&v| format_f64(v)))?;
    }
    w.flush().map_err(|e| IcqfError::io(path.as_ref(), e))?;
    Ok(())
}

/// Writes the loadings `[RQ, CQ]` as one row per question: the question id,
/// then one column per factor and per confound column.
pub fn save_loading_table(
    path: impl AsRef<Path>,
    model: &FactorModel,
    confounds: &EncodedConfounds,
    question_ids: &[String],
) -> Result<()> {
    let m = model.rq.nrows();
    if question_ids.len() != m || confounds.ncols() != model.cq.ncols() {
        return Err(IcqfError::Dimension(format!(
            "{} question ids and {} confound columns for a {m}-question model with {} confound loadings",
            question_ids.len(),
            confounds.ncols(),
            model.cq.ncols()
        )));
    }
    let mut w = writer(path.as_ref())?;
    let mut header = vec!["question_id".to_string()];
    header.extend(factor_header(model.k));
    header.extend(confounds.labels().iter().map(ColumnLabel::display));
    w.write_record(&header)?;
    for (j, id) in question_ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(model.rq.row(j).iter().chain(model.cq.row(j)).map(|&v| format_f64(v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| IcqfError::io(path.as_ref(), e))?;
    Ok(())
}

/// Reads a dense matrix written by [`save_matrix`].
pub fn load_matrix(path: impl AsRef<Path>) -> Result<(Vec<String>, Array2<f64>)> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(IcqfError::NotRectangular {
                row: i,
                found: record.len(),
                expected: header.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            data.push(parse_f64(cell, i, j)?);
        }
        rows += 1;
    }
    let mat = Array2::from_shape_vec((rows, header.len()), data)
        .map_err(|e| IcqfError::Dimension(e.to_string()))?;
    Ok((header, mat))
}

/// Reads the confound declaration file: a JSON list of
/// `{name, kind: "categorical"|"continuous", levels?}`.
pub fn load_confound_specs(path: impl AsRef<Path>) -> Result<Vec<ConfoundSpec>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IcqfError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads the declared columns of a confound table (CSV with header).
pub fn load_confound_table(path: impl AsRef<Path>, specs: &[ConfoundSpec]) -> Result<Vec<RawConfound>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let records: Vec<csv::StringRecord> = rdr.records().collect::<std::result::Result<_, _>>()?;
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        let col = header.iter().position(|h| h == &spec.name).ok_or_else(|| {
            IcqfError::Invalid(format!("confound {:?} not found in {}", spec.name, path.display()))
        })?;
        let cells = records.iter().enumerate().map(|(i, r)| {
            r.get(col).map(str::to_string).ok_or(IcqfError::NotRectangular {
                row: i,
                found: r.len(),
                expected: header.len(),
            })
        });
        let data = match spec.kind {
            ConfoundKind::Continuous => RawColumnData::Continuous(
                cells
                    .enumerate()
                    .map(|(i, c)| c.and_then(|c| parse_f64(&c, i, col)))
                    .collect::<Result<_>>()?,
            ),
            ConfoundKind::Categorical => RawColumnData::Categorical(cells.collect::<Result<_>>()?),
        };
        out.push(RawConfound {
            name: spec.name.clone(),
            data,
            levels: spec.levels.clone(),
        });
    }
    Ok(out)
}

/// Contents of `meta.json` in a model directory. Infinite bounds are stored
/// as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub k: usize,
    pub beta: f64,
    pub gamma: f64,
    pub rho: f64,
    pub q_upper: Option<f64>,
    pub w_upper: Option<f64>,
    pub lower: f64,
    pub upper: Option<f64>,
    pub column_labels: Vec<ColumnLabel>,
    pub question_ids: Vec<String>,
    pub confound_encoder: ConfoundEncoder,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn factor_header(k: usize) -> Vec<String> {
    (0..k).map(|f| format!("factor_{f}")).collect()
}

/// Persists a model as `{W.csv, RQ.csv, CQ.csv, meta.json}` under `dir`.
pub fn save_model(
    dir: impl AsRef<Path>,
    model: &FactorModel,
    confounds: &EncodedConfounds,
    question_ids: &[String],
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| IcqfError::io(dir, e))?;
    let conf_header: Vec<String> = confounds.labels().iter().map(ColumnLabel::display).collect();
    save_matrix(dir.join("W.csv"), &factor_header(model.k), &model.w)?;
    save_matrix(dir.join("RQ.csv"), &factor_header(model.k), &model.rq)?;
    save_matrix(dir.join("CQ.csv"), &conf_header, &model.cq)?;
    let meta = ModelMeta {
        k: model.k,
        beta: model.beta,
        gamma: model.gamma,
        rho: model.rho,
        q_upper: finite(model.q_upper),
        w_upper: finite(model.w_upper),
        lower: model.lower,
        upper: finite(model.upper),
        column_labels: confounds.labels().to_vec(),
        question_ids: question_ids.to_vec(),
        confound_encoder: confounds.encoder().clone(),
    };
    write_json(dir.join("meta.json"), &meta)
}

/// Loads a model directory. `Z` and the dual are reset to zero.
pub fn load_model(dir: impl AsRef<Path>) -> Result<(FactorModel, ModelMeta)> {
    let dir = dir.as_ref();
    let meta: ModelMeta = read_json(dir.join("meta.json"))?;
    let (_, w) = load_matrix(dir.join("W.csv"))?;
    let (_, rq) = load_matrix(dir.join("RQ.csv"))?;
    let (_, cq) = if meta.column_labels.is_empty() {
        (Vec::new(), Array2::zeros((rq.nrows(), 0)))
    } else {
        load_matrix(dir.join("CQ.csv"))?
    };
    if rq.ncols() != meta.k || w.ncols() != meta.k || cq.nrows() != rq.nrows() {
        return Err(IcqfError::Dimension(format!(
            "model directory {} is inconsistent with k = {}",
            dir.display(),
            meta.k
        )));
    }
    let (n, m) = (w.nrows(), rq.nrows());
    let model = FactorModel {
        w,
        rq,
        cq,
        z: Array2::zeros((n, m)),
        alpha: Array2::zeros((n, m)),
        k: meta.k,
        beta: meta.beta,
        gamma: meta.gamma,
        rho: meta.rho,
        q_upper: meta.q_upper.unwrap_or(f64::INFINITY),
        w_upper: meta.w_upper.unwrap_or(f64::INFINITY),
        lower: meta.lower,
        upper: meta.upper.unwrap_or(f64::INFINITY),
    };
    Ok((model, meta))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| IcqfError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IcqfError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn formats_like_g17() {
        assert_eq!(format_f64(0.1), "0.10000000000000001");
        assert_eq!(format_f64(1.0), "1");
        assert_eq!(format_f64(-2.5), "-2.5");
        assert_eq!(format_f64(100.0), "100");
        assert_eq!(format_f64(1e-7), "9.9999999999999995e-8");
        assert_eq!(format_f64(1e20), "1e20");
    }

    #[test]
    fn loads_missing_cells() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "m.csv", "a,b\n1,2\n,0\n");
        let m = load_masked_matrix(&p, "").unwrap();
        assert_eq!(m.get(0, 0), Some(1.0));
        assert_eq!(m.get(1, 0), None);
        assert_eq!(m.mask(), array![[1.0, 1.0], [0.0, 1.0]]);
        assert_eq!((m.lower(), m.upper()), (0.0, 2.0));
        assert_eq!(m.column_ids(), ["a", "b"]);
    }

    #[test]
    fn loads_all_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "m.csv", "a,b,c\n0,0,0\n0,0,0\n0,0,0\n");
        let m = load_masked_matrix(&p, "NA").unwrap();
        assert_eq!(m.mask(), Array2::<f64>::ones((3, 3)));
        assert_eq!((m.lower(), m.upper()), (0.0, 0.0));
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "m.csv", "a,b\n1,NA\n2,NA\n");
        let err = load_masked_matrix(&p, "NA").unwrap_err();
        assert!(matches!(err, IcqfError::EmptyColumn(1)));
        assert!(err.to_string().contains("empty column"));

        let p = write(dir.path(), "r.csv", "a,b\n1,2\n3\n");
        assert!(matches!(load_masked_matrix(&p, "NA"), Err(IcqfError::NotRectangular { row: 1, .. })));

        let p = write(dir.path(), "x.csv", "a,b\n1,two\n");
        assert!(matches!(load_masked_matrix(&p, "NA"), Err(IcqfError::BadCell { row: 0, col: 1, .. })));

        let p = write(dir.path(), "e.csv", "a,b\n1,2\nNA,NA\n");
        assert!(matches!(load_masked_matrix(&p, "NA"), Err(IcqfError::EmptyRow(1))));
    }

    #[test]
    fn confound_table_and_specs() {
        let dir = tempfile::tempdir().unwrap();
        let specs = write(
            dir.path(),
            "c.json",
            r#"[{"name": "age", "kind": "continuous"}, {"name": "sex", "kind": "categorical", "levels": ["M", "F"]}]"#,
        );
        let table = write(dir.path(), "c.csv", "id,age,sex\n1,8,M\n2,13,F\n3,18,M\n");
        let specs = load_confound_specs(specs).unwrap();
        let raw = load_confound_table(table, &specs).unwrap();
        let c = crate::data::encode_confounds(&raw, 3).unwrap();
        assert_eq!(c.matrix().row(1).to_vec(), vec![0.5, 0.5, 0.0, 1.0, 1.0]);
    }

    fn small_model() -> (FactorModel, EncodedConfounds) {
        let data = MaskedMatrix::from_dense(array![[1.0, 2.0, 0.0], [0.0, 1.0, 3.0], [2.0, 2.0, 1.0]]).unwrap();
        let conf = EncodedConfounds::intercept_only(3);
        let (model, _) = crate::admm::fit(&data, &conf, &crate::admm::SolverConfig::default()).unwrap();
        (model, conf)
    }

    #[test]
    fn model_round_trips_exactly() {
        let (model, conf) = small_model();
        let dir = tempfile::tempdir().unwrap();
        let ids: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        save_model(dir.path(), &model, &conf, &ids).unwrap();
        let (back, meta) = load_model(dir.path()).unwrap();
        assert_eq!(back.w, model.w);
        assert_eq!(back.rq, model.rq);
        assert_eq!(back.cq, model.cq);
        assert_eq!(back.q_upper.to_bits(), model.q_upper.to_bits());
        assert_eq!(meta.question_ids, ids);
        assert_eq!(meta.confound_encoder, *conf.encoder());
    }

    #[test]
    fn loading_table_layout() {
        let (model, conf) = small_model();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.csv");
        let ids: Vec<String> = ["x,1", "y", "z"].map(String::from).to_vec();
        save_loading_table(&p, &model, &conf, &ids).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "question_id,factor_0,factor_1,intercept:1");
        assert!(lines[1].starts_with("\"x,1\","));
        assert_eq!(lines.len(), 4);
        assert!(save_loading_table(&p, &model, &conf, &ids[..2]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn masked_matrix_round_trips(
            cells in proptest::collection::vec((any::<bool>(), -1e6f64..1e6), 12),
        ) {
            let values = Array2::from_shape_fn((3, 4), |(i, j)| cells[i * 4 + j].1);
            let mut observed = Array2::from_shape_fn((3, 4), |(i, j)| cells[i * 4 + j].0);
            for i in 0..3 { observed[(i, i)] = true; }
            for j in 0..4 { observed[(0, j)] = true; }
            let m = MaskedMatrix::new(values, observed).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.csv");
            save_masked_matrix(&m, &p, "NA").unwrap();
            let back = load_masked_matrix(&p, "NA").unwrap();
            prop_assert_eq!(back.mask(), m.mask());
            prop_assert_eq!(back.masked_values(), m.masked_values());
            prop_assert_eq!(back.lower().to_bits(), m.lower().to_bits());
            prop_assert_eq!(back.upper().to_bits(), m.upper().to_bits());
        }

        #[test]
        fn format_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            prop_assert_eq!(format_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
