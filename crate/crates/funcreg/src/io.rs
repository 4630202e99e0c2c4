//! Dataset and draw-file input/output: delimited dataset parsing and
//! writing, plus a flat binary draw store with a JSON manifest so fits can
//! be re-summarized without re-running the sampler.

use crate::design::FunctionalDataset;
use crate::error::{Error, Result};
use crate::posteriors::ParamLayout;
use crate::sampler::PosteriorDraws;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Column expectations for a delimited dataset file. Columns appear in
/// order: outcome, optional censoring indicator, scalar covariates, then the
/// functional columns whose headers are the grid values.
#[derive(Debug, Clone)]
pub struct DatasetSchema {
    pub outcome: String,
    /// Name of the censoring column, if the model is a survival model.
    pub censor: Option<String>,
    /// Names of scalar covariate columns.
    pub scalars: Vec<String>,
}

impl DatasetSchema {
    pub fn scalar_outcome() -> Self {
        DatasetSchema {
            outcome: "y".into(),
            censor: None,
            scalars: Vec::new(),
        }
    }

    pub fn survival() -> Self {
        DatasetSchema {
            outcome: "y".into(),
            censor: Some("censor".into()),
            scalars: Vec::new(),
        }
    }
}

fn ingest(msg: impl Into<String>) -> Error {
    Error::Ingest(msg.into())
}

/// Parse a delimited dataset file against a schema.
///
/// The header row names each column; functional columns are those whose
/// headers parse as numbers, and those numbers form the observation grid.
pub fn parse_dataset(path: &Path, schema: &DatasetSchema) -> Result<FunctionalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| ingest(format!("{}: {e}", path.display())))?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| ingest(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() {
        return Err(ingest("no data rows"));
    }

    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ingest(format!("missing column `{name}`")))
    };
    let outcome_idx = find(&schema.outcome)?;
    let censor_idx = schema.censor.as_deref().map(find).transpose()?;
    let scalar_idx: Vec<usize> = schema
        .scalars
        .iter()
        .map(|s| find(s))
        .collect::<Result<_>>()?;

    // Functional columns: headers that parse as grid values, excluding any
    // named columns.
    let named: Vec<usize> = std::iter::once(outcome_idx)
        .chain(censor_idx)
        .chain(scalar_idx.iter().copied())
        .collect();
    let mut grid = Vec::new();
    let mut func_idx = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if named.contains(&i) {
            continue;
        }
        match h.parse::<f64>() {
            Ok(t) => {
                grid.push(t);
                func_idx.push(i);
            }
            Err(_) => {
                return Err(ingest(format!(
                    "column `{h}` is neither declared nor a grid value"
                )))
            }
        }
    }
    if grid.is_empty() {
        return Err(ingest("no functional columns found"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ingest("functional column grid is not strictly increasing"));
    }

    let mut y = Vec::new();
    let mut censor = Vec::new();
    let mut scalars: Vec<Vec<f64>> = vec![Vec::new(); scalar_idx.len()];
    let mut w_rows: Vec<f64> = Vec::new();

    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ingest(format!("row {}: {e}", row_no + 1)))?;
        let cell = |col: usize| -> Result<f64> {
            let raw = record
                .get(col)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| {
                    ingest(format!(
                        "missing value at row {}, column `{}`",
                        row_no + 1,
                        headers[col]
                    ))
                })?;
            raw.parse::<f64>().map_err(|_| {
                ingest(format!(
                    "unreadable value `{raw}` at row {}, column `{}`",
                    row_no + 1,
                    headers[col]
                ))
            })
        };
        y.push(cell(outcome_idx)?);
        if let Some(ci) = censor_idx {
            let v = cell(ci)?;
            if v != 0.0 && v != 1.0 {
                return Err(ingest(format!(
                    "censoring indicator must be 0 or 1, found {v} at row {}, column `{}`",
                    row_no + 1,
                    headers[ci]
                )));
            }
            censor.push(v as u8);
        }
        for (k, &si) in scalar_idx.iter().enumerate() {
            scalars[k].push(cell(si)?);
        }
        for &fi in &func_idx {
            w_rows.push(cell(fi)?);
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(ingest("no data rows"));
    }

    let m = grid.len();
    let w = Array2::from_shape_vec((n, m), w_rows).expect("row-major curve block");
    let p = scalar_idx.len();
    let mut z = Array2::zeros((p, n));
    for (k, col) in scalars.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            z[[k, i]] = v;
        }
    }
    let data = FunctionalDataset {
        y: Array1::from(y),
        censor: censor_idx.map(|_| censor),
        z,
        w,
        grid: Array1::from(grid),
    };
    data.validate()?;
    Ok(data)
}

/// Write a dataset in the layout `parse_dataset` reads. Values are printed
/// in shortest round-trip form, so a write/read cycle is bit-identical.
pub fn write_dataset(path: &Path, data: &FunctionalDataset, schema: &DatasetSchema) -> Result<()> {
    data.validate()?;
    if schema.censor.is_some() != data.censor.is_some() {
        return Err(Error::Spec(
            "schema and dataset disagree about the censoring column".into(),
        ));
    }
    if schema.scalars.len() != data.z.nrows() {
        return Err(Error::Spec(
            "schema scalar columns do not match the dataset".into(),
        ));
    }
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec![schema.outcome.clone()];
    header.extend(schema.censor.clone());
    header.extend(schema.scalars.iter().cloned());
    header.extend(data.grid.iter().map(|t| t.to_string()));
    writer.write_record(&header)?;
    for i in 0..data.n() {
        let mut row = vec![data.y[i].to_string()];
        if let Some(c) = &data.censor {
            row.push(c[i].to_string());
        }
        for k in 0..data.z.nrows() {
            row.push(data.z[[k, i]].to_string());
        }
        for t in 0..data.grid.len() {
            row.push(data.w[[i, t]].to_string());
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

const DRAWS_MAGIC: u64 = 0x4652_4452_4157_5331; // "FRDRAWS1"

#[derive(Debug, Serialize, Deserialize)]
struct DrawManifest {
    binary_file: String,
    chains: usize,
    draws_per_chain: usize,
    dim: usize,
    parameters: Vec<ManifestParam>,
    divergences: Vec<usize>,
    step_sizes: Vec<f64>,
    accept_rates: Vec<f64>,
    divergence_warning: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestParam {
    name: String,
    len: usize,
}

/// Save posterior draws: `<stem>.bin` holds a dimensions header (magic,
/// chains, draws, dim as little-endian u64) followed by each chain's draws
/// as row-major little-endian doubles; `<stem>.json` is the manifest.
pub fn write_draws(dir: &Path, stem: &str, draws: &PosteriorDraws) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let bin_name = format!("{stem}.bin");
    let mut bin = std::io::BufWriter::new(std::fs::File::create(dir.join(&bin_name))?);
    let (chains, iters, dim) = (draws.n_chains(), draws.n_draws(), draws.dim());
    for v in [DRAWS_MAGIC, chains as u64, iters as u64, dim as u64] {
        bin.write_all(&v.to_le_bytes())?;
    }
    for chain in &draws.chains {
        for v in chain.iter() {
            bin.write_all(&v.to_le_bytes())?;
        }
    }
    bin.flush()?;

    let manifest = DrawManifest {
        binary_file: bin_name,
        chains,
        draws_per_chain: iters,
        dim,
        parameters: draws
            .layout
            .names()
            .map(|n| ManifestParam {
                name: n.to_string(),
                len: draws.layout.range(n).len(),
            })
            .collect(),
        divergences: draws.divergences.clone(),
        step_sizes: draws.step_sizes.clone(),
        accept_rates: draws.accept_rates.clone(),
        divergence_warning: draws.divergence_warning,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| ingest(format!("manifest encode: {e}")))?;
    std::fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(())
}

/// Load posterior draws written by [`write_draws`]. Doubles round-trip
/// bit-identically.
pub fn read_draws(dir: &Path, stem: &str) -> Result<PosteriorDraws> {
    let manifest_path = dir.join(format!("{stem}.json"));
    let manifest: DrawManifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path)?)
        .map_err(|e| ingest(format!("{}: {e}", manifest_path.display())))?;

    let mut bin = std::io::BufReader::new(std::fs::File::open(dir.join(&manifest.binary_file))?);
    let read_u64 = |bin: &mut dyn Read| -> Result<u64> {
        let mut buf = [0u8; 8];
        bin.read_exact(&mut buf)?;
        Ok(u64::from_le_bytes(buf))
    };
    if read_u64(&mut bin)? != DRAWS_MAGIC {
        return Err(ingest("draw file has the wrong magic number"));
    }
    let chains = read_u64(&mut bin)? as usize;
    let iters = read_u64(&mut bin)? as usize;
    let dim = read_u64(&mut bin)? as usize;
    if chains != manifest.chains || iters != manifest.draws_per_chain || dim != manifest.dim {
        return Err(ingest("draw file dimensions disagree with the manifest"));
    }

    let mut layout = ParamLayout::new();
    for p in &manifest.parameters {
        layout = layout.push(&p.name, p.len);
    }
    if layout.total_len() != dim {
        return Err(ingest("manifest parameter lengths do not sum to dim"));
    }

    let mut chain_arrays = Vec::with_capacity(chains);
    for _ in 0..chains {
        let mut buf = vec![0u8; iters * dim * 8];
        bin.read_exact(&mut buf)?;
        let values: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        chain_arrays
            .push(Array2::from_shape_vec((iters, dim), values).expect("row-major chain block"));
    }
    Ok(PosteriorDraws {
        layout,
        chains: chain_arrays,
        divergences: manifest.divergences,
        step_sizes: manifest.step_sizes,
        accept_rates: manifest.accept_rates,
        divergence_warning: manifest.divergence_warning,
    })
}

/// Write a curve-summary table: t, posterior mean, pointwise interval, and
/// simultaneous interval columns.
pub fn write_curve_table(
    path: &Path,
    grid: &Array1<f64>,
    mean: &Array1<f64>,
    pw: &(Array1<f64>, Array1<f64>),
    cma: &(Array1<f64>, Array1<f64>),
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["t", "mean", "pw_lo", "pw_hi", "cma_lo", "cma_hi"])?;
    for t in 0..grid.len() {
        writer.write_record(&[
            grid[t].to_string(),
            mean[t].to_string(),
            pw.0[t].to_string(),
            pw.1[t].to_string(),
            cma.0[t].to_string(),
            cma.1[t].to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::SamplerConfig;
    use crate::simlab::{gen_sofr, ScenarioConfig, ScenarioModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn dataset_round_trip_is_bit_identical() {
        let dir = tmpdir();
        let config = ScenarioConfig::new(ScenarioModel::SofrGaussian, 20, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sim = gen_sofr(&config, &mut rng).unwrap();
        let schema = DatasetSchema::scalar_outcome();
        let path = dir.path().join("data.csv");
        write_dataset(&path, &sim.data, &schema).unwrap();
        let back = parse_dataset(&path, &schema).unwrap();
        assert_eq!(back.y, sim.data.y);
        assert_eq!(back.w, sim.data.w);
        assert_eq!(back.grid, sim.data.grid);
        assert_eq!(back.censor, sim.data.censor);
    }

    #[test]
    fn survival_round_trip_keeps_censoring() {
        let dir = tmpdir();
        let config = ScenarioConfig::new(ScenarioModel::Cox, 25, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sim = crate::simlab::gen_cox(&config, &mut rng).unwrap();
        let schema = DatasetSchema::survival();
        let path = dir.path().join("surv.csv");
        write_dataset(&path, &sim.data, &schema).unwrap();
        let back = parse_dataset(&path, &schema).unwrap();
        assert_eq!(back.censor, sim.data.censor);
        assert_eq!(back.y, sim.data.y);
    }

    #[test]
    fn grid_comes_from_headers() {
        let dir = tmpdir();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "y,0.1,0.4,0.9\n1.0,2.0,3.0,4.0\n").unwrap();
        let data = parse_dataset(&path, &DatasetSchema::scalar_outcome()).unwrap();
        assert_eq!(data.grid.to_vec(), vec![0.1, 0.4, 0.9]);
        assert_eq!(data.w.dim(), (1, 3));
        assert_eq!(data.y[0], 1.0);
    }

    #[test]
    fn missing_value_names_row_and_column() {
        let dir = tmpdir();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "y,0.1,0.4\n1.0,2.0,\n").unwrap();
        let err = parse_dataset(&path, &DatasetSchema::scalar_outcome()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1"), "{msg}");
        assert!(msg.contains("0.4"), "{msg}");
    }

    #[test]
    fn bad_censor_value_names_cell() {
        let dir = tmpdir();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "y,censor,0.1,0.4\n1.0,2,2.0,3.0\n").unwrap();
        let err = parse_dataset(&path, &DatasetSchema::survival()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 1") && msg.contains("censor"), "{msg}");
    }

    #[test]
    fn empty_file_reports_no_rows() {
        let dir = tmpdir();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "y,0.1,0.4\n").unwrap();
        let err = parse_dataset(&path, &DatasetSchema::scalar_outcome()).unwrap_err();
        assert!(err.to_string().contains("no data rows"), "{err}");
    }

    #[test]
    fn non_monotone_grid_rejected() {
        let dir = tmpdir();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "y,0.4,0.1\n1.0,2.0,3.0\n").unwrap();
        let err = parse_dataset(&path, &DatasetSchema::scalar_outcome()).unwrap_err();
        assert!(err.to_string().contains("increasing"), "{err}");
    }

    #[test]
    fn draws_round_trip_is_bit_identical() {
        use crate::posteriors::{ModelPosterior, ParamLayout};
        use ndarray::{Array1, ArrayView1};

        struct StdNormal(ParamLayout);
        impl ModelPosterior for StdNormal {
            fn layout(&self) -> &ParamLayout {
                &self.0
            }
            fn log_density_grad(
                &self,
                theta: ArrayView1<f64>,
            ) -> crate::Result<(f64, Array1<f64>)> {
                Ok((
                    -0.5 * theta.iter().map(|v| v * v).sum::<f64>(),
                    theta.mapv(|v| -v),
                ))
            }
        }
        let model = StdNormal(ParamLayout::new().push("x", 3));
        let config = SamplerConfig {
            iter: 40,
            warmup: 50,
            chains: 2,
            seed: 9,
            ..SamplerConfig::default()
        };
        let draws = crate::sampler::run_nuts(&model, &config).unwrap();
        let dir = tmpdir();
        write_draws(dir.path(), "fit", &draws).unwrap();
        let back = read_draws(dir.path(), "fit").unwrap();
        assert_eq!(back.chains.len(), draws.chains.len());
        for (a, b) in back.chains.iter().zip(draws.chains.iter()) {
            assert_eq!(a, b);
        }
        assert_eq!(back.divergences, draws.divergences);
        assert_eq!(back.layout.range("x"), draws.layout.range("x"));
    }

    #[test]
    fn curve_table_has_expected_columns() {
        let dir = tmpdir();
        let path = dir.path().join("curve.csv");
        let grid = Array1::from(vec![0.0, 0.5, 1.0]);
        let mean = Array1::from(vec![1.0, 2.0, 3.0]);
        let lo = Array1::from(vec![0.5, 1.5, 2.5]);
        let hi = Array1::from(vec![1.5, 2.5, 3.5]);
        write_curve_table(
            &path,
            &grid,
            &mean,
            &(lo.clone(), hi.clone()),
            &(lo.mapv(|v| v - 0.1), hi.mapv(|v| v + 0.1)),
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,mean,pw_lo,pw_hi,cma_lo,cma_hi"));
        assert_eq!(text.lines().count(), 4);
    }
}
