//! Provider summary CSV ingestion.
//!
//! Required columns: `id, observed, expected, effective_size`. Optional:
//! `n_patients`, `b3_sum`. Covariates are `w_1 … w_P` and are centered
//! column-wise; the centers are returned so reports can record them.

use crate::error::{CliError, CliResult};
use provconf_core::ProviderSummary;
use std::collections::HashSet;
use std::path::Path;

const REQUIRED: [&str; 4] = ["id", "observed", "expected", "effective_size"];

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub providers: Vec<ProviderSummary>,
    pub covariate_names: Vec<String>,
    pub centers: Vec<f64>,
    pub warnings: Vec<String>,
}

fn covariate_index(name: &str) -> Option<usize> {
    name.strip_prefix("w_")?.parse::<usize>().ok().filter(|k| *k >= 1)
}

pub fn ingest(path: &Path) -> CliResult<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    ingest_reader(file, path)
}

pub fn ingest_reader<R: std::io::Read>(reader: R, path: &Path) -> CliResult<Ingested> {
    let err = |row: Option<usize>, column: Option<&str>, message: String| CliError::Ingest {
        path: path.to_path_buf(),
        row,
        column: column.map(str::to_string),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| err(Some(1), None, e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);

    let mut cols = Vec::with_capacity(REQUIRED.len());
    for name in REQUIRED {
        cols.push(find(name).ok_or_else(|| err(Some(1), Some(name), format!("missing required column `{name}`")))?);
    }
    let n_col = find("n_patients");
    let b3_col = find("b3_sum");

    let mut warnings = Vec::new();
    let mut cov: Vec<(usize, usize, String)> = Vec::new();
    for (j, h) in headers.iter().enumerate() {
        if let Some(k) = covariate_index(h) {
            cov.push((k, j, h.to_string()));
        } else if !REQUIRED.contains(&h) && h != "n_patients" && h != "b3_sum" {
            warnings.push(format!("ignoring unrecognized column `{h}`"));
        }
    }
    cov.sort();
    for (expect, (k, _, name)) in cov.iter().enumerate() {
        if *k != expect + 1 {
            return Err(err(Some(1), Some(name), format!("covariate columns must be w_1..w_P without gaps; found `{name}`")));
        }
    }

    let mut providers = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        // Line numbers count the header as line 1.
        let line = i + 2;
        let rec = rec.map_err(|e| err(Some(line), None, e.to_string()))?;
        let cell = |j: usize, name: &str| -> CliResult<f64> {
            let raw = rec.get(j).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(Some(line), Some(name), format!("non-numeric value `{raw}`")))
        };
        let id = rec.get(cols[0]).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(err(Some(line), Some("id"), "empty provider id".into()));
        }
        if !seen.insert(id.clone()) {
            return Err(err(Some(line), Some("id"), format!("duplicate provider id `{id}`")));
        }
        let w = cov.iter().map(|(_, j, name)| cell(*j, name)).collect::<CliResult<Vec<f64>>>()?;
        let mut p = ProviderSummary::new(id, cell(cols[1], "observed")?, cell(cols[2], "expected")?, cell(cols[3], "effective_size")?, w);
        if let Some(j) = n_col {
            if !rec.get(j).unwrap_or("").is_empty() {
                let v = cell(j, "n_patients")?;
                if v < 1.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                    return Err(err(Some(line), Some("n_patients"), format!("n_patients must be a positive integer, got {v}")));
                }
                p = p.with_n_patients(v as u32);
            }
        }
        if let Some(j) = b3_col {
            if !rec.get(j).unwrap_or("").is_empty() {
                p = p.with_b3_sum(cell(j, "b3_sum")?);
            }
        }
        providers.push(p);
    }
    if providers.is_empty() {
        return Err(err(None, None, "no provider rows".into()));
    }

    let n = providers.len() as f64;
    let mut centers = vec![0.0; cov.len()];
    for (k, center) in centers.iter_mut().enumerate() {
        *center = providers.iter().map(|p| p.covariates[k]).sum::<f64>() / n;
        let spread = providers.iter().map(|p| (p.covariates[k] - *center).abs()).fold(0.0, f64::max);
        if spread == 0.0 {
            warnings.push(format!("covariate `{}` is constant; the design will be rank deficient", cov[k].2));
        }
    }
    for p in &mut providers {
        for (w, c) in p.covariates.iter_mut().zip(&centers) {
            *w -= c;
        }
    }
    Ok(Ingested { providers, covariate_names: cov.into_iter().map(|(_, _, n)| n).collect(), centers, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<Ingested> {
        ingest_reader(text.as_bytes(), Path::new("test.csv"))
    }

    #[test]
    fn centers_each_covariate() {
        let d = parse("id,observed,expected,effective_size,w_1,w_2\na,3,2.5,2.5,1,10\nb,1,2,2,2,20\nc,4,3,3,6,30\n").unwrap();
        assert_eq!(d.providers.len(), 3);
        assert_eq!(d.centers, vec![3.0, 20.0]);
        for k in 0..2 {
            let s: f64 = d.providers.iter().map(|p| p.covariates[k]).sum();
            assert!(s.abs() < 1e-12);
        }
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn missing_column_is_named() {
        let e = parse("id,observed,effective_size\na,1,2\n").unwrap_err();
        match e {
            CliError::Ingest { column, .. } => assert_eq!(column.as_deref(), Some("expected")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_cell_reports_location() {
        let e = parse("id,observed,expected,effective_size\na,1,2,2\nb,x,2,2\n").unwrap_err();
        match e {
            CliError::Ingest { row, column, .. } => {
                assert_eq!(row, Some(3));
                assert_eq!(column.as_deref(), Some("observed"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_and_empty_files() {
        assert!(parse("id,observed,expected,effective_size\na,1,2,2\na,1,2,2\n").is_err());
        assert!(parse("id,observed,expected,effective_size\n").is_err());
    }

    #[test]
    fn constant_covariate_warns() {
        let d = parse("id,observed,expected,effective_size,w_1\na,1,2,2,5\nb,2,2,2,5\n").unwrap();
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn optional_columns() {
        let d = parse("id,observed,expected,effective_size,n_patients,b3_sum\na,1,2,2,40,2\nb,2,2,2,,\n").unwrap();
        assert_eq!(d.providers[0].n_patients, Some(40));
        assert_eq!(d.providers[0].b3_sum, Some(2.0));
        assert_eq!(d.providers[1].n_patients, None);
        assert!(parse("id,observed,expected,effective_size,n_patients\na,1,2,2,2.5\n").is_err());
    }

    #[test]
    fn covariate_gap_is_rejected() {
        assert!(parse("id,observed,expected,effective_size,w_1,w_3\na,1,2,2,0,0\n").is_err());
    }
}
