//! Synthetic cohorts with planted structure: equicorrelated Gaussian
//! blocks whose correlation may differ between groups, class-shifted
//! informative features, MCAR missingness and an optional categorical
//! confound tied to the label.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Column, ColumnData, ColumnKind, ColumnSchema, RawTable};
use crate::linalg::cholesky;

pub const LABEL_COLUMN: &str = "diagnosis";
pub const ID_COLUMN: &str = "sample_id";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub members: usize,
    pub rho_case: f64,
    pub rho_control: f64,
}

impl BlockSpec {
    pub fn uniform(members: usize, rho: f64) -> Self {
        BlockSpec {
            members,
            rho_case: rho,
            rho_control: rho,
        }
    }
}

/// Shifts the class means of one feature (indexed over blocks then noise)
/// by `±effect / 2`. For a unit-variance feature outside any block this is
/// exactly a log-odds slope of `effect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InformativeSpec {
    pub feature: usize,
    pub effect: f64,
}

/// A categorical column whose level frequencies depend on the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfoundSpec {
    pub name: String,
    pub levels: Vec<String>,
    pub case_probs: Vec<f64>,
    pub control_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_per_group: usize,
    pub blocks: Vec<BlockSpec>,
    #[serde(default)]
    pub informative: Vec<InformativeSpec>,
    #[serde(default)]
    pub noise_features: usize,
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default)]
    pub confound: Option<ConfoundSpec>,
    /// Features written in micrograms, to exercise unit conversion.
    #[serde(default)]
    pub microgram_features: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    pub fn n_features(&self) -> usize {
        self.blocks.iter().map(|b| b.members).sum::<usize>() + self.noise_features
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            for k in 0..block.members {
                names.push(format!("blk{}_m{}", b + 1, k + 1));
            }
        }
        for k in 0..self.noise_features {
            names.push(format!("noise{}", k + 1));
        }
        names
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_group < 2 {
            return Err(Error::Config("n_per_group must be at least 2".into()));
        }
        if self.n_features() == 0 {
            return Err(Error::Config("synthetic cohort needs at least one feature".into()));
        }
        for (b, block) in self.blocks.iter().enumerate() {
            if block.members == 0 {
                return Err(Error::Config(format!("block {} is empty", b + 1)));
            }
            for rho in [block.rho_case, block.rho_control] {
                if !(rho > -1.0 && rho < 1.0) {
                    return Err(Error::Config(format!("block {} correlation {rho} outside (-1, 1)", b + 1)));
                }
            }
        }
        let p = self.n_features();
        for inf in &self.informative {
            if inf.feature >= p || !inf.effect.is_finite() {
                return Err(Error::Config(format!("bad informative feature {inf:?}")));
            }
        }
        if let Some(&j) = self.microgram_features.iter().find(|&&j| j >= p) {
            return Err(Error::Config(format!("microgram feature {j} out of range")));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Config(format!("missing_rate must lie in [0, 1), got {}", self.missing_rate)));
        }
        if let Some(c) = &self.confound {
            let ok = |p: &[f64]| {
                p.len() == c.levels.len() && p.iter().all(|v| *v >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9
            };
            if c.levels.len() < 2 || !ok(&c.case_probs) || !ok(&c.control_probs) {
                return Err(Error::Config(format!("confound {:?} needs ≥ 2 levels and two probability vectors", c.name)));
            }
        }
        Ok(())
    }

    /// The bundled demonstration cohort.
    pub fn demo() -> Self {
        SynthSpec {
            n_per_group: 100,
            blocks: vec![
                BlockSpec::uniform(5, 0.7),
                BlockSpec::uniform(3, 0.7),
                BlockSpec::uniform(3, 0.7),
                BlockSpec {
                    members: 3,
                    rho_case: 0.7,
                    rho_control: 0.1,
                },
            ],
            informative: vec![
                InformativeSpec { feature: 0, effect: 1.5 },
                InformativeSpec { feature: 5, effect: 1.0 },
                InformativeSpec { feature: 14, effect: 1.2 },
            ],
            noise_features: 4,
            missing_rate: 0.02,
            confound: Some(ConfoundSpec {
                name: "APOE".into(),
                levels: vec!["e2e3".into(), "e3e3".into(), "e3e4".into()],
                case_probs: vec![0.1, 0.4, 0.5],
                control_probs: vec![0.2, 0.6, 0.2],
            }),
            microgram_features: vec![1, 6],
            seed: 2024,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "demo" => Ok(Self::demo()),
            other => Err(Error::Config(format!("unknown synth preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTruth {
    pub members: Vec<String>,
    pub rho_case: f64,
    pub rho_control: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub blocks: Vec<BlockTruth>,
    pub informative: Vec<(String, f64)>,
    pub noise: Vec<String>,
    pub label_name: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub table: RawTable,
    pub schema: Vec<ColumnSchema>,
    pub truth: GroundTruth,
}

fn equicorrelation_factor(m: usize, rho: f64) -> Result<Array2<f64>> {
    let mut c = Array2::from_elem((m, m), rho);
    c.diag_mut().fill(1.0);
    cholesky(&c, 1e-12).ok_or_else(|| {
        Error::InvalidData(format!(
            "equicorrelation {rho} over {m} members is not positive definite (needs rho > {})",
            -1.0 / (m as f64 - 1.0)
        ))
    })
}

fn draw_level(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Controls occupy the first `n_per_group` rows, cases the rest.
pub fn generate_cohort(spec: &SynthSpec) -> Result<Cohort> {
    spec.validate()?;
    let names = spec.feature_names();
    let p = names.len();
    let n = 2 * spec.n_per_group;
    let labels: Vec<u8> = (0..n).map(|i| (i >= spec.n_per_group) as u8).collect();

    let factors: Vec<[Array2<f64>; 2]> = spec
        .blocks
        .iter()
        .map(|b| Ok([equicorrelation_factor(b.members, b.rho_control)?, equicorrelation_factor(b.members, b.rho_case)?]))
        .collect::<Result<_>>()?;
    let mut shift = vec![0.0; p];
    for inf in &spec.informative {
        shift[inf.feature] += inf.effect / 2.0;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Array2::<f64>::zeros((n, p));
    for i in 0..n {
        let g = labels[i] as usize;
        let sign = if g == 1 { 1.0 } else { -1.0 };
        let mut col = 0;
        for (b, block) in spec.blocks.iter().enumerate() {
            let z: Vec<f64> = (0..block.members).map(|_| StandardNormal.sample(&mut rng)).collect();
            let l = &factors[b][g];
            for r in 0..block.members {
                values[[i, col + r]] = (0..=r).map(|c| l[[r, c]] * z[c]).sum();
            }
            col += block.members;
        }
        for j in col..p {
            values[[i, j]] = StandardNormal.sample(&mut rng);
        }
        for j in 0..p {
            values[[i, j]] += sign * shift[j];
        }
    }

    let confound_levels: Option<Vec<usize>> = spec.confound.as_ref().map(|c| {
        (0..n)
            .map(|i| draw_level(&mut rng, if labels[i] == 1 { &c.case_probs } else { &c.control_probs }))
            .collect()
    });

    // Missingness has its own stream so the values do not depend on the rate.
    let mut mask_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6d69_7373_696e_67);
    let mut columns = Vec::with_capacity(p + 1);
    let mut schema = vec![ColumnSchema::new(ID_COLUMN, ColumnKind::Excluded)];
    for (j, name) in names.iter().enumerate() {
        let micro = spec.microgram_features.contains(&j);
        let cells: Vec<Option<f64>> = (0..n)
            .map(|i| {
                let missing = mask_rng.gen::<f64>() < spec.missing_rate;
                let v = if micro { values[[i, j]] * 1000.0 } else { values[[i, j]] };
                (!missing).then_some(v)
            })
            .collect();
        let mut s = ColumnSchema::new(name.clone(), ColumnKind::Continuous);
        if micro {
            s = s.with_unit("ug", 0.001);
        }
        schema.push(s.clone());
        columns.push(Column {
            schema: s,
            data: ColumnData::Numeric(cells),
            indicator: false,
        });
    }
    if let (Some(c), Some(levels)) = (&spec.confound, confound_levels) {
        let s = ColumnSchema::new(c.name.clone(), ColumnKind::Categorical);
        schema.push(s.clone());
        columns.push(Column {
            schema: s,
            data: ColumnData::Categorical(levels.iter().map(|&k| Some(c.levels[k].clone())).collect()),
            indicator: false,
        });
    }
    schema.push(ColumnSchema::new(LABEL_COLUMN, ColumnKind::Label));

    let mut offset = 0;
    let blocks = spec
        .blocks
        .iter()
        .map(|b| {
            let t = BlockTruth {
                members: names[offset..offset + b.members].to_vec(),
                rho_case: b.rho_case,
                rho_control: b.rho_control,
            };
            offset += b.members;
            t
        })
        .collect();
    let truth = GroundTruth {
        blocks,
        informative: spec.informative.iter().map(|i| (names[i.feature].clone(), i.effect)).collect(),
        noise: names[offset..].to_vec(),
        label_name: LABEL_COLUMN.into(),
        seed: spec.seed,
    };
    Ok(Cohort {
        table: RawTable {
            columns,
            label_name: LABEL_COLUMN.into(),
            labels,
            row_ids: (0..n).map(|i| format!("S{:05}", i + 1)).collect(),
        },
        schema,
        truth,
    })
}

impl Cohort {
    /// Writes `cohort.csv`, `schema.json` and `truth.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("cohort.csv");
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(self.schema.iter().map(|s| s.name.as_str()))?;
        for i in 0..self.table.n_rows() {
            let mut row = Vec::with_capacity(self.schema.len());
            for s in &self.schema {
                let cell = match s.kind {
                    ColumnKind::Excluded => self.table.row_ids[i].clone(),
                    ColumnKind::Label => self.table.labels[i].to_string(),
                    _ => match &self.table.column(&s.name).expect("schema column").data {
                        ColumnData::Numeric(v) => v[i].map(|x| x.to_string()).unwrap_or_default(),
                        ColumnData::Categorical(v) => v[i].clone().unwrap_or_default(),
                    },
                };
                row.push(cell);
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        let write_json = |name: &str, text: String| {
            let path = dir.join(name);
            std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
        };
        write_json("schema.json", serde_json::to_string_pretty(&self.schema)?)?;
        write_json("truth.json", serde_json::to_string_pretty(&self.truth)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_csv, preprocess, ParseOptions};
    use crate::stats::pearson;
    use ndarray::Array1;

    fn column(c: &Cohort, name: &str, group: Option<u8>) -> Array1<f64> {
        let ColumnData::Numeric(v) = &c.table.column(name).unwrap().data else { panic!() };
        v.iter()
            .zip(&c.table.labels)
            .filter(|(_, l)| group.map_or(true, |g| **l == g))
            .map(|(x, _)| x.unwrap())
            .collect()
    }

    fn blocks_only(members: Vec<BlockSpec>, n: usize, seed: u64) -> SynthSpec {
        SynthSpec {
            n_per_group: n,
            blocks: members,
            informative: vec![],
            noise_features: 0,
            missing_rate: 0.0,
            confound: None,
            microgram_features: vec![],
            seed,
        }
    }

    #[test]
    fn block_correlation_bounds() {
        let c = generate_cohort(&blocks_only(vec![BlockSpec::uniform(3, 0.8)], 1000, 5)).unwrap();
        for (a, b) in [(1, 2), (1, 3), (2, 3)] {
            let r = pearson(
                column(&c, &format!("blk1_m{a}"), None).view(),
                column(&c, &format!("blk1_m{b}"), None).view(),
            )
            .unwrap();
            assert!((0.72..=0.86).contains(&r), "{r}");
        }
    }

    #[test]
    fn converges_to_rho_per_group() {
        let spec = blocks_only(
            vec![BlockSpec {
                members: 4,
                rho_case: 0.6,
                rho_control: -0.2,
            }],
            5000,
            9,
        );
        let c = generate_cohort(&spec).unwrap();
        for (group, rho) in [(1u8, 0.6), (0u8, -0.2)] {
            let r = pearson(column(&c, "blk1_m1", Some(group)).view(), column(&c, "blk1_m4", Some(group)).view()).unwrap();
            assert!((r - rho).abs() < 0.04, "group {group}: {r}");
        }
    }

    #[test]
    fn independent_blocks() {
        let n = 1000;
        let c = generate_cohort(&blocks_only(vec![BlockSpec::uniform(2, 0.0), BlockSpec::uniform(2, 0.0)], n / 2, 3)).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        let names = ["blk1_m1", "blk1_m2", "blk2_m1", "blk2_m2"];
        for a in 0..4 {
            for b in a + 1..4 {
                let r = pearson(column(&c, names[a], None).view(), column(&c, names[b], None).view()).unwrap();
                assert!(r.abs() < bound, "{} {}: {r}", names[a], names[b]);
            }
        }
    }

    #[test]
    fn not_positive_definite() {
        let spec = blocks_only(vec![BlockSpec::uniform(4, -0.5)], 10, 0);
        assert!(matches!(generate_cohort(&spec), Err(Error::InvalidData(_))));
    }

    #[test]
    fn balanced_and_seeded() {
        let a = generate_cohort(&SynthSpec::demo()).unwrap();
        let b = generate_cohort(&SynthSpec::demo()).unwrap();
        assert_eq!(a, b);
        let cases = a.table.labels.iter().filter(|&&l| l == 1).count();
        assert_eq!(cases * 2, a.table.n_rows());
    }

    #[test]
    fn informative_shift() {
        let mut spec = blocks_only(vec![], 4000, 1);
        spec.noise_features = 1;
        spec.informative = vec![InformativeSpec { feature: 0, effect: 2.0 }];
        let c = generate_cohort(&spec).unwrap();
        let m1 = column(&c, "noise1", Some(1)).mean().unwrap();
        let m0 = column(&c, "noise1", Some(0)).mean().unwrap();
        assert!((m1 - m0 - 2.0).abs() < 0.1);
    }

    #[test]
    fn files_round_trip_through_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let cohort = generate_cohort(&SynthSpec::demo()).unwrap();
        cohort.write(dir.path()).unwrap();
        let first = std::fs::read(dir.path().join("cohort.csv")).unwrap();
        cohort.write(dir.path()).unwrap();
        assert_eq!(first, std::fs::read(dir.path().join("cohort.csv")).unwrap());
        let schema = crate::ingest::read_schema(&dir.path().join("schema.json")).unwrap();
        let table = parse_csv(&dir.path().join("cohort.csv"), &schema, &ParseOptions::default()).unwrap();
        assert_eq!(table, cohort.table);
        let m = preprocess(table, 5).unwrap();
        assert!(m.feature_names.iter().any(|n| n.starts_with("APOE_is_")));
        let truth: GroundTruth =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
        assert_eq!(truth, cohort.truth);
    }
}
