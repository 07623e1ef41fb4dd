//! Retained draws and their on-disk form: one CSV per parameter block plus
//! `manifest.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SamplerConfig, Sweeper};
use crate::date::YearQuarter;
use crate::error::{Error, Result};
use crate::model::{centered_states, ModelParameters, ShrinkageState, TvpSvModelSpec};
use crate::series::fmt_num;

/// Post burn-in acceptance rates of the Metropolis-Hastings blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRates {
    pub a_v: Option<f64>,
    pub c_v: Option<f64>,
    pub a_beta: Option<f64>,
    pub c_beta: Option<f64>,
    pub rho_sigma: Option<f64>,
}

impl AcceptanceRates {
    pub(crate) fn from_sweeper(s: &Sweeper) -> Self {
        Self {
            a_v: s.tuning.a_v.rate(),
            c_v: s.tuning.c_v.rate(),
            a_beta: s.tuning.a_beta.rate(),
            c_beta: s.tuning.c_beta.rate(),
            rho_sigma: (s.rho_proposed > 0).then(|| s.rho_accepted as f64 / s.rho_proposed as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub spec: TvpSvModelSpec,
    pub config: SamplerConfig,
    pub columns: Vec<String>,
    pub first_origin: Option<YearQuarter>,
    pub last_origin: Option<YearQuarter>,
    pub draws: Vec<ModelParameters>,
    pub acceptance: AcceptanceRates,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: String,
    seed: u64,
    spec: TvpSvModelSpec,
    config: SamplerConfig,
    columns: Vec<String>,
    first_origin: Option<YearQuarter>,
    last_origin: Option<YearQuarter>,
    n_retained: usize,
    t_len: usize,
    acceptance: AcceptanceRates,
    files: Vec<String>,
}

const VECTOR_BLOCKS: [&str; 6] = ["beta0", "sqrt_v", "tau2_v", "lambda_v", "tau2_beta", "lambda_beta"];

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn t_len(&self) -> usize {
        self.draws.first().map_or(0, |d| d.t_len())
    }

    /// Values of one scalar function across draws.
    pub fn extract(&self, f: impl Fn(&ModelParameters) -> f64) -> Vec<f64> {
        self.draws.iter().map(f).collect()
    }

    /// Centred coefficient of column `j` at row `t` for every draw.
    pub fn coefficient_path_draws(&self, t: usize, j: usize) -> Vec<f64> {
        self.extract(|d| d.beta0[j] + d.sqrt_v[j] * d.states_tilde[t * d.k + j])
    }

    pub fn centered(&self) -> Vec<Vec<f64>> {
        self.draws.iter().map(centered_states).collect()
    }

    fn vector_block<'a>(d: &'a ModelParameters, name: &str) -> &'a [f64] {
        match name {
            "beta0" => &d.beta0,
            "sqrt_v" => &d.sqrt_v,
            "tau2_v" => &d.shrink_v.tau2,
            "lambda_v" => &d.shrink_v.lambda,
            "tau2_beta" => &d.shrink_beta.tau2,
            "lambda_beta" => &d.shrink_beta.lambda,
            _ => unreachable!("unknown block {name}"),
        }
    }

    /// Writes the draws into `dir`, creating it if needed.
    pub fn write_dir<P: AsRef<Path>>(&self, dir: P) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();

        for name in VECTOR_BLOCKS {
            let file = format!("{name}.csv");
            let mut w = csv::Writer::from_path(dir.join(&file))?;
            let mut header = vec!["draw".to_string()];
            header.extend(self.columns.iter().cloned());
            w.write_record(&header)?;
            for (i, d) in self.draws.iter().enumerate() {
                let mut rec = vec![i.to_string()];
                rec.extend(Self::vector_block(d, name).iter().map(|v| fmt_num(*v)));
                w.write_record(&rec)?;
            }
            w.flush()?;
            files.push(file);
        }

        let mut w = csv::Writer::from_path(dir.join("states_tilde.csv"))?;
        let mut header = vec!["draw".to_string(), "row".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (i, d) in self.draws.iter().enumerate() {
            for t in 0..d.t_len() {
                let mut rec = vec![i.to_string(), t.to_string()];
                rec.extend(d.state_tilde(t).iter().map(|v| fmt_num(*v)));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        files.push("states_tilde.csv".into());

        let mut w = csv::Writer::from_path(dir.join("log_vol.csv"))?;
        w.write_record(["draw", "row", "log_vol"])?;
        for (i, d) in self.draws.iter().enumerate() {
            for (t, h) in d.log_vol.iter().enumerate() {
                w.write_record([i.to_string(), t.to_string(), fmt_num(*h)])?;
            }
        }
        w.flush()?;
        files.push("log_vol.csv".into());

        let mut w = csv::Writer::from_path(dir.join("scalars.csv"))?;
        w.write_record([
            "draw", "mu_sigma", "rho_sigma", "theta2", "a_v", "c_v", "kappa_v", "a_beta", "c_beta", "kappa_beta",
        ])?;
        for (i, d) in self.draws.iter().enumerate() {
            let vals = [
                d.mu_sigma,
                d.rho_sigma,
                d.theta2,
                d.shrink_v.a,
                d.shrink_v.c,
                d.shrink_v.kappa,
                d.shrink_beta.a,
                d.shrink_beta.c,
                d.shrink_beta.kappa,
            ];
            let mut rec = vec![i.to_string()];
            rec.extend(vals.iter().map(|v| fmt_num(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        files.push("scalars.csv".into());

        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.config.seed,
            spec: self.spec,
            config: self.config,
            columns: self.columns.clone(),
            first_origin: self.first_origin,
            last_origin: self.last_origin,
            n_retained: self.draws.len(),
            t_len: self.t_len(),
            acceptance: self.acceptance,
            files,
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn read_dir<P: AsRef<Path>>(dir: P) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest_path = dir.join("manifest.json");
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::Schema {
            file: manifest_path.display().to_string(),
            detail: e.to_string(),
        })?;
        let m: Manifest = serde_json::from_str(&text)?;
        let k = m.columns.len();
        let n = m.n_retained;
        let t_len = m.t_len;

        let read_rows = |file: &str, lead: usize, width: usize| -> Result<Vec<Vec<f64>>> {
            let path = dir.join(file);
            let mut r = csv::Reader::from_path(&path)?;
            let mut rows = Vec::new();
            for (line, rec) in r.records().enumerate() {
                let rec = rec?;
                if rec.len() != lead + width {
                    return Err(Error::Schema {
                        file: path.display().to_string(),
                        detail: format!("row {} has {} fields, expected {}", line + 2, rec.len(), lead + width),
                    });
                }
                let vals = (lead..lead + width)
                    .map(|c| {
                        rec[c].parse::<f64>().map_err(|_| Error::Schema {
                            file: path.display().to_string(),
                            detail: format!("row {} column {}: not a number: {:?}", line + 2, c + 1, &rec[c]),
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                rows.push(vals);
            }
            Ok(rows)
        };
        let expect_rows = |file: &str, got: usize, want: usize| -> Result<()> {
            if got != want {
                return Err(Error::Schema {
                    file: dir.join(file).display().to_string(),
                    detail: format!("expected {want} rows, found {got}"),
                });
            }
            Ok(())
        };

        let mut blocks = Vec::new();
        for name in VECTOR_BLOCKS {
            let file = format!("{name}.csv");
            let rows = read_rows(&file, 1, k)?;
            expect_rows(&file, rows.len(), n)?;
            blocks.push(rows);
        }
        let states = read_rows("states_tilde.csv", 2, k)?;
        expect_rows("states_tilde.csv", states.len(), n * t_len)?;
        let log_vol = read_rows("log_vol.csv", 2, 1)?;
        expect_rows("log_vol.csv", log_vol.len(), n * t_len)?;
        let scalars = read_rows("scalars.csv", 1, 9)?;
        expect_rows("scalars.csv", scalars.len(), n)?;

        let draws = (0..n)
            .map(|i| {
                let s = &scalars[i];
                ModelParameters {
                    k,
                    beta0: blocks[0][i].clone(),
                    sqrt_v: blocks[1][i].clone(),
                    states_tilde: states[i * t_len..(i + 1) * t_len].concat(),
                    log_vol: log_vol[i * t_len..(i + 1) * t_len].iter().map(|r| r[0]).collect(),
                    mu_sigma: s[0],
                    rho_sigma: s[1],
                    theta2: s[2],
                    shrink_v: ShrinkageState {
                        tau2: blocks[2][i].clone(),
                        lambda: blocks[3][i].clone(),
                        a: s[3],
                        c: s[4],
                        kappa: s[5],
                    },
                    shrink_beta: ShrinkageState {
                        tau2: blocks[4][i].clone(),
                        lambda: blocks[5][i].clone(),
                        a: s[6],
                        c: s[7],
                        kappa: s[8],
                    },
                }
            })
            .collect();
        Ok(Self {
            spec: m.spec,
            config: m.config,
            columns: m.columns,
            first_origin: m.first_origin,
            last_origin: m.last_origin,
            draws,
            acceptance: m.acceptance,
        })
    }
}
