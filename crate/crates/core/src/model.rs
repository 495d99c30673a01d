//! Configuration schema, unit conversion and the value types shared by the
//! rest of the crate.
//!
//! The block duration is normalized to one, so every energy (Joules) is
//! numerically equal to the corresponding average power over the block.
//!
//! Config documents are JSON. Every dimensioned field carries its unit in the
//! field name; a quantity may be given in any one of its accepted units:
//!
//! | quantity | accepted fields |
//! |---|---|
//! | ET power budget | `p_max_dbm`, `p_max_w` |
//! | circuit energy | `p_circuit_dbm`, `p_circuit_j` |
//! | noise variance | `noise_dbm`, `noise_w` |
//! | residual energy | `e_initial_uj`, `e_initial_j` (default 0) |
//! | storage capacity | `e_max_uj`, `e_max_j` |
//! | amplifier efficiency | `amp_eff` (default 1) |
//! | linear EH constant | `mu` (default 1) |
//!
//! Per-pair fields accept a scalar (broadcast to every pair) or a list of
//! `num_pairs` values. [`to_document`] always writes the SI variants so that a
//! save/load cycle is lossless.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// `10^((dBm - 30) / 10)`.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Parameters of the sigmoid harvester model, one entry per pair.
///
/// `omega` is always derived from `a_tilde` and `b_tilde`; it is never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearEhParams {
    /// Saturation power `N_k`, Watts.
    pub n_sat: Vec<f64>,
    /// Steepness `ã_k`, 1/Watt.
    pub a_tilde: Vec<f64>,
    /// Offset `b̃_k`, Watts.
    pub b_tilde: Vec<f64>,
}

impl NonlinearEhParams {
    /// Fitted rectifier parameters: 48.86 µW saturation, ã = 26515.46 /W,
    /// b̃ = -29.81 µW.
    pub fn reference(num_pairs: usize) -> Self {
        Self {
            n_sat: vec![48.86e-6; num_pairs],
            a_tilde: vec![26515.46; num_pairs],
            b_tilde: vec![-29.81e-6; num_pairs],
        }
    }

    pub fn pair(&self, k: usize) -> SigmoidParams {
        SigmoidParams {
            n_sat: self.n_sat[k],
            a_tilde: self.a_tilde[k],
            b_tilde: self.b_tilde[k],
        }
    }

    pub fn omega(&self, k: usize) -> f64 {
        self.pair(k).omega()
    }
}

/// Sigmoid harvester parameters of a single pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmoidParams {
    pub n_sat: f64,
    pub a_tilde: f64,
    pub b_tilde: f64,
}

impl SigmoidParams {
    /// `Ω = 1 / (1 + exp(ã b̃))`.
    pub fn omega(&self) -> f64 {
        1.0 / (1.0 + (self.a_tilde * self.b_tilde).exp())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EhModel {
    Linear,
    NonLinear(NonlinearEhParams),
}

impl EhModel {
    pub fn name(&self) -> &'static str {
        match self {
            EhModel::Linear => "linear",
            EhModel::NonLinear(_) => "nonlinear",
        }
    }
}

/// LMMSE channel-estimation quality.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiModel {
    pub rho_h: f64,
    pub rho_g: f64,
    /// Channel variance override for every phase-1 link. `None` uses the
    /// scattering share of the link's path gain, `c0 (d/d0)^-v / (M + 1)`.
    pub sigma2_h: Option<f64>,
    pub sigma2_g: Option<f64>,
    /// Phase-2 channels equal the phase-1 channels entry by entry.
    pub reciprocity: bool,
}

impl Default for CsiModel {
    fn default() -> Self {
        Self {
            rho_h: 1.0,
            rho_g: 1.0,
            sigma2_h: None,
            sigma2_g: None,
            reciprocity: true,
        }
    }
}

impl CsiModel {
    pub fn with_rho(rho: f64) -> Self {
        Self {
            rho_h: rho,
            rho_g: rho,
            ..Self::default()
        }
    }

    /// `(1 - ρ_h²) σ_h²`; exactly zero when `ρ_h = 1`.
    pub fn error_variance_h(&self, link_variance: f64) -> f64 {
        error_variance(self.rho_h, self.sigma2_h.unwrap_or(link_variance))
    }

    pub fn error_variance_g(&self, link_variance: f64) -> f64 {
        error_variance(self.rho_g, self.sigma2_g.unwrap_or(link_variance))
    }
}

fn error_variance(rho: f64, sigma2: f64) -> f64 {
    (1.0 - rho * rho) * sigma2
}

/// Node placement. Distances are between ET `j` and IT `i`.
#[derive(Clone, Debug, PartialEq)]
pub enum Layout {
    Positions {
        et: Vec<[f64; 2]>,
        it: Vec<[f64; 2]>,
    },
    /// `d[(i, j)]`: ET `j` to IT `i`, meters.
    Distances(DMatrix<f64>),
}

impl Layout {
    /// Pairs stacked on a segment of `line_length` meters with each ET-IT pair
    /// `pair_distance` meters apart, adjacent pairs `line_length / (K - 1)`
    /// apart.
    pub fn symmetric_line(num_pairs: usize, line_length: f64, pair_distance: f64) -> Self {
        let spacing = if num_pairs > 1 {
            line_length / (num_pairs - 1) as f64
        } else {
            0.0
        };
        let et = (0..num_pairs).map(|k| [0.0, k as f64 * spacing]).collect();
        let it = (0..num_pairs)
            .map(|k| [pair_distance, k as f64 * spacing])
            .collect();
        Layout::Positions { et, it }
    }

    /// Two pairs: ET1 at (0, 12), ET2 at (0, 0), IT2 at (10, 0); IT1 starts at
    /// (10, 12) and moves `delta_x` meters along the 45° diagonal.
    pub fn asymmetric(delta_x: f64) -> Self {
        let step = delta_x / std::f64::consts::SQRT_2;
        Layout::Positions {
            et: vec![[0.0, 12.0], [0.0, 0.0]],
            it: vec![[10.0 + step, 12.0 + step], [10.0, 0.0]],
        }
    }

    pub fn num_pairs(&self) -> usize {
        match self {
            Layout::Positions { et, .. } => et.len(),
            Layout::Distances(d) => d.nrows(),
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match self {
            Layout::Positions { et, it } => {
                let dx = it[i][0] - et[j][0];
                let dy = it[i][1] - et[j][1];
                dx.hypot(dy)
            }
            Layout::Distances(d) => d[(i, j)],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometryConfig {
    /// Rician factor `M`.
    pub rician_factor: f64,
    /// Path loss at the reference distance, linear.
    pub ref_attenuation: f64,
    /// Reference distance `d0`, meters.
    pub ref_distance: f64,
    /// Path-loss exponent `v`.
    pub pathloss_exp: f64,
    pub layout: Layout,
}

impl GeometryConfig {
    /// `M = 3`, `c0 = -20 dB`, `d0 = 1 m`, `v = 3`.
    pub fn reference(layout: Layout) -> Self {
        Self {
            rician_factor: 3.0,
            ref_attenuation: db_to_linear(-20.0),
            ref_distance: 1.0,
            pathloss_exp: 3.0,
            layout,
        }
    }

    /// `c0 (d_ij / d0)^-v` for ET `j` to IT `i`.
    pub fn path_gain(&self, i: usize, j: usize) -> f64 {
        let d = self.layout.distance(i, j);
        self.ref_attenuation * (d / self.ref_distance).powf(-self.pathloss_exp)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub num_pairs: usize,
    /// ET power budgets, Watts.
    pub p_max: Vec<f64>,
    /// Circuit energy per block, Joules.
    pub p_circuit: Vec<f64>,
    /// Power-amplifier efficiencies in (0, 1].
    pub amp_eff: Vec<f64>,
    /// Linear EH conversion constants in (0, 1].
    pub mu: Vec<f64>,
    /// Receiver noise variances, Watts.
    pub noise_var: Vec<f64>,
    /// Residual energy at block start, Joules.
    pub e_initial: Vec<f64>,
    /// Storage capacity, Joules.
    pub e_max: Vec<f64>,
    pub eh_model: EhModel,
    pub csi: CsiModel,
    pub geometry: GeometryConfig,
}

impl NetworkConfig {
    /// The symmetric reference network: 32 dBm budgets, -23 dBm circuit
    /// energy, unit efficiencies, -70 dBm noise, 50 µJ storage, empty
    /// batteries, ρ = 0.9, pairs on a 50 m line with 10 m pair distance.
    pub fn reference(num_pairs: usize) -> Self {
        let k = num_pairs;
        Self {
            num_pairs: k,
            p_max: vec![dbm_to_watts(32.0); k],
            p_circuit: vec![dbm_to_watts(-23.0); k],
            amp_eff: vec![1.0; k],
            mu: vec![1.0; k],
            noise_var: vec![dbm_to_watts(-70.0); k],
            e_initial: vec![0.0; k],
            e_max: vec![50e-6; k],
            eh_model: EhModel::Linear,
            csi: CsiModel::with_rho(0.9),
            geometry: GeometryConfig::reference(Layout::symmetric_line(k, 50.0, 10.0)),
        }
    }

    pub fn total_power_budget(&self) -> f64 {
        self.p_max.iter().sum()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let k = self.num_pairs;
        if k == 0 {
            return Err(ConfigError::OutOfRange {
                field: "num_pairs".into(),
                bound: "[1, inf)",
            });
        }
        let vectors: [(&'static str, &Vec<f64>); 7] = [
            ("p_max", &self.p_max),
            ("p_circuit", &self.p_circuit),
            ("amp_eff", &self.amp_eff),
            ("mu", &self.mu),
            ("noise_var", &self.noise_var),
            ("e_initial", &self.e_initial),
            ("e_max", &self.e_max),
        ];
        for (field, v) in vectors {
            if v.len() != k {
                return Err(ConfigError::Length {
                    field,
                    got: v.len(),
                    expected: k,
                });
            }
        }
        check_all("p_max", &self.p_max, |v| v >= 0.0, "[0, inf)")?;
        check_all("p_circuit", &self.p_circuit, |v| v >= 0.0, "[0, inf)")?;
        check_all("amp_eff", &self.amp_eff, |v| v > 0.0 && v <= 1.0, "(0,1]")?;
        check_all("mu", &self.mu, |v| v > 0.0 && v <= 1.0, "(0,1]")?;
        check_all("noise_var", &self.noise_var, |v| v > 0.0, "(0, inf)")?;
        check_all("e_initial", &self.e_initial, |v| v >= 0.0, "[0, inf)")?;
        check_all("e_max", &self.e_max, |v| v >= 0.0, "[0, inf)")?;
        for i in 0..k {
            if self.e_initial[i] > self.e_max[i] {
                return Err(ConfigError::OutOfRange {
                    field: format!("e_initial[{i}]"),
                    bound: "[0, e_max]",
                });
            }
        }
        if let EhModel::NonLinear(nl) = &self.eh_model {
            for (field, v) in [
                ("n_sat", &nl.n_sat),
                ("a_tilde", &nl.a_tilde),
                ("b_tilde", &nl.b_tilde),
            ] {
                if v.len() != k {
                    return Err(ConfigError::Length {
                        field,
                        got: v.len(),
                        expected: k,
                    });
                }
            }
            check_all("n_sat", &nl.n_sat, |v| v > 0.0, "(0, inf)")?;
            check_all("a_tilde", &nl.a_tilde, |v| v > 0.0, "(0, inf)")?;
            check_all("b_tilde", &nl.b_tilde, |_| true, "(-inf, inf)")?;
        }
        let csi = &self.csi;
        check_scalar("rho_h", csi.rho_h, |v| (0.0..=1.0).contains(&v), "[0,1]")?;
        check_scalar("rho_g", csi.rho_g, |v| (0.0..=1.0).contains(&v), "[0,1]")?;
        if let Some(s) = csi.sigma2_h {
            check_scalar("sigma2_h", s, |v| v >= 0.0, "[0, inf)")?;
        }
        if let Some(s) = csi.sigma2_g {
            check_scalar("sigma2_g", s, |v| v >= 0.0, "[0, inf)")?;
        }
        let g = &self.geometry;
        check_scalar("rician_factor", g.rician_factor, |v| v >= 0.0, "[0, inf)")?;
        check_scalar("ref_attenuation", g.ref_attenuation, |v| v > 0.0, "(0, inf)")?;
        check_scalar("ref_distance", g.ref_distance, |v| v > 0.0, "(0, inf)")?;
        check_scalar("pathloss_exp", g.pathloss_exp, |v| v >= 0.0, "[0, inf)")?;
        match &g.layout {
            Layout::Positions { et, it } => {
                if et.len() != k || it.len() != k {
                    return Err(ConfigError::Length {
                        field: "positions_m",
                        got: et.len().min(it.len()),
                        expected: k,
                    });
                }
            }
            Layout::Distances(d) => {
                if d.nrows() != k || d.ncols() != k {
                    return Err(ConfigError::Length {
                        field: "distances_m",
                        got: d.nrows(),
                        expected: k,
                    });
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                let d = g.layout.distance(i, j);
                if !(d > 0.0 && d.is_finite()) {
                    return Err(ConfigError::OutOfRange {
                        field: format!("distance[{i}][{j}]"),
                        bound: "(0, inf)",
                    });
                }
            }
        }
        Ok(())
    }
}

fn check_all(
    field: &'static str,
    values: &[f64],
    ok: impl Fn(f64) -> bool,
    bound: &'static str,
) -> Result<(), ConfigError> {
    for &v in values {
        if !(v.is_finite() && ok(v)) {
            return Err(ConfigError::OutOfRange {
                field: field.into(),
                bound,
            });
        }
    }
    Ok(())
}

fn check_scalar(
    field: &'static str,
    v: f64,
    ok: impl Fn(f64) -> bool,
    bound: &'static str,
) -> Result<(), ConfigError> {
    check_all(field, &[v], ok, bound)
}

// ---------------------------------------------------------------------------
// Document schema

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum PerPair {
    Scalar(f64),
    List(Vec<f64>),
}

impl PerPair {
    fn expand(&self, field: &'static str, k: usize) -> Result<Vec<f64>, ConfigError> {
        match self {
            PerPair::Scalar(v) => Ok(vec![*v; k]),
            PerPair::List(v) if v.len() == k => Ok(v.clone()),
            PerPair::List(v) => Err(ConfigError::Length {
                field,
                got: v.len(),
                expected: k,
            }),
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    num_pairs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_max_dbm: Option<PerPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_max_w: Option<PerPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_circuit_dbm: Option<PerPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_circuit_j: Option<PerPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amp_eff: Option<PerPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<PerPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_dbm: Option<PerPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_w: Option<PerPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e_initial_uj: Option<PerPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e_initial_j: Option<PerPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e_max_uj: Option<PerPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    e_max_j: Option<PerPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eh_model: Option<EhModelDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    csi: Option<CsiDoc>,
    geometry: GeometryDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum EhModelDoc {
    Linear,
    Nonlinear {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_sat_uw: Option<PerPair>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_sat_w: Option<PerPair>,
        a_tilde_per_w: PerPair,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b_tilde_uw: Option<PerPair>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b_tilde_w: Option<PerPair>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CsiDoc {
    #[serde(default = "one")]
    rho_h: f64,
    #[serde(default = "one")]
    rho_g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma2_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma2_g: Option<f64>,
    #[serde(default = "yes")]
    reciprocity: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryDoc {
    rician_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ref_attenuation_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ref_attenuation: Option<f64>,
    ref_distance_m: f64,
    pathloss_exp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positions_m: Option<PositionsDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layout: Option<LayoutDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distances_m: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PositionsDoc {
    et: Vec<[f64; 2]>,
    it: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LayoutDoc {
    Symmetric {
        line_length_m: f64,
        #[serde(default = "ten")]
        pair_distance_m: f64,
    },
    Asymmetric {
        delta_x_m: f64,
    },
}

fn ten() -> f64 {
    10.0
}

fn pick<'a>(
    a: &'a Option<PerPair>,
    a_name: &'static str,
    b: &'a Option<PerPair>,
    b_name: &'static str,
) -> Result<Option<(&'a PerPair, bool)>, ConfigError> {
    match (a, b) {
        (Some(_), Some(_)) => Err(ConfigError::Conflict(a_name, b_name)),
        (Some(v), None) => Ok(Some((v, true))),
        (None, Some(v)) => Ok(Some((v, false))),
        (None, None) => Ok(None),
    }
}

fn required(
    k: usize,
    a: &Option<PerPair>,
    a_name: &'static str,
    a_conv: fn(f64) -> f64,
    b: &Option<PerPair>,
    b_name: &'static str,
) -> Result<Vec<f64>, ConfigError> {
    optional(k, a, a_name, a_conv, b, b_name)?.ok_or(ConfigError::Missing(a_name))
}

fn optional(
    k: usize,
    a: &Option<PerPair>,
    a_name: &'static str,
    a_conv: fn(f64) -> f64,
    b: &Option<PerPair>,
    b_name: &'static str,
) -> Result<Option<Vec<f64>>, ConfigError> {
    Ok(match pick(a, a_name, b, b_name)? {
        Some((v, true)) => Some(v.expand(a_name, k)?.into_iter().map(a_conv).collect()),
        Some((v, false)) => Some(v.expand(b_name, k)?),
        None => None,
    })
}

fn micro(v: f64) -> f64 {
    v * 1e-6
}

/// Parse and validate a JSON config document, converting every field to SI.
pub fn load_config(text: &str) -> Result<NetworkConfig, ConfigError> {
    let doc: ConfigDoc = serde_json::from_str(text)?;
    let k = doc.num_pairs;
    if k == 0 {
        return Err(ConfigError::OutOfRange {
            field: "num_pairs".into(),
            bound: "[1, inf)",
        });
    }
    let p_max = required(k, &doc.p_max_dbm, "p_max_dbm", dbm_to_watts, &doc.p_max_w, "p_max_w")?;
    let p_circuit = required(
        k,
        &doc.p_circuit_dbm,
        "p_circuit_dbm",
        dbm_to_watts,
        &doc.p_circuit_j,
        "p_circuit_j",
    )?;
    let noise_var = required(k, &doc.noise_dbm, "noise_dbm", dbm_to_watts, &doc.noise_w, "noise_w")?;
    let e_initial = optional(
        k,
        &doc.e_initial_uj,
        "e_initial_uj",
        micro,
        &doc.e_initial_j,
        "e_initial_j",
    )?
    .unwrap_or_else(|| vec![0.0; k]);
    let e_max = required(k, &doc.e_max_uj, "e_max_uj", micro, &doc.e_max_j, "e_max_j")?;
    let amp_eff = match &doc.amp_eff {
        Some(v) => v.expand("amp_eff", k)?,
        None => vec![1.0; k],
    };
    let mu = match &doc.mu {
        Some(v) => v.expand("mu", k)?,
        None => vec![1.0; k],
    };

    let eh_model = match &doc.eh_model {
        None | Some(EhModelDoc::Linear) => EhModel::Linear,
        Some(EhModelDoc::Nonlinear {
            n_sat_uw,
            n_sat_w,
            a_tilde_per_w,
            b_tilde_uw,
            b_tilde_w,
        }) => EhModel::NonLinear(NonlinearEhParams {
            n_sat: required(k, n_sat_uw, "n_sat_uw", micro, n_sat_w, "n_sat_w")?,
            a_tilde: a_tilde_per_w.expand("a_tilde_per_w", k)?,
            b_tilde: required(k, b_tilde_uw, "b_tilde_uw", micro, b_tilde_w, "b_tilde_w")?,
        }),
    };

    let csi = match &doc.csi {
        None => CsiModel::default(),
        Some(c) => CsiModel {
            rho_h: c.rho_h,
            rho_g: c.rho_g,
            sigma2_h: c.sigma2_h,
            sigma2_g: c.sigma2_g,
            reciprocity: c.reciprocity,
        },
    };

    let g = &doc.geometry;
    let ref_attenuation = match (g.ref_attenuation_db, g.ref_attenuation) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::Conflict("ref_attenuation_db", "ref_attenuation"))
        }
        (Some(db), None) => db_to_linear(db),
        (None, Some(lin)) => lin,
        (None, None) => return Err(ConfigError::Missing("ref_attenuation_db")),
    };
    // Explicit positions win over everything else.
    let layout = if let Some(pos) = &g.positions_m {
        Layout::Positions {
            et: pos.et.clone(),
            it: pos.it.clone(),
        }
    } else if let Some(l) = &g.layout {
        match l {
            LayoutDoc::Symmetric {
                line_length_m,
                pair_distance_m,
            } => Layout::symmetric_line(k, *line_length_m, *pair_distance_m),
            LayoutDoc::Asymmetric { delta_x_m } => Layout::asymmetric(*delta_x_m),
        }
    } else if let Some(d) = &g.distances_m {
        if d.len() != k || d.iter().any(|row| row.len() != k) {
            return Err(ConfigError::Length {
                field: "distances_m",
                got: d.len(),
                expected: k,
            });
        }
        Layout::Distances(DMatrix::from_fn(k, k, |i, j| d[i][j]))
    } else {
        return Err(ConfigError::Missing("positions_m"));
    };
    let geometry = GeometryConfig {
        rician_factor: g.rician_factor,
        ref_attenuation,
        ref_distance: g.ref_distance_m,
        pathloss_exp: g.pathloss_exp,
        layout,
    };

    let config = NetworkConfig {
        num_pairs: k,
        p_max,
        p_circuit,
        amp_eff,
        mu,
        noise_var,
        e_initial,
        e_max,
        eh_model,
        csi,
        geometry,
    };
    config.validate()?;
    if matches!(config.eh_model, EhModel::NonLinear(_)) && config.mu.iter().any(|&m| m != 1.0) {
        log::warn!(
            "nonlinear EH model ignores mu; linear-model runs on this config scale by mu != 1"
        );
    }
    Ok(config)
}

/// Serialize a config using SI-unit fields only.
pub fn to_document(config: &NetworkConfig) -> String {
    let list = |v: &Vec<f64>| Some(PerPair::List(v.clone()));
    let eh_model = match &config.eh_model {
        EhModel::Linear => EhModelDoc::Linear,
        EhModel::NonLinear(nl) => EhModelDoc::Nonlinear {
            n_sat_uw: None,
            n_sat_w: list(&nl.n_sat),
            a_tilde_per_w: PerPair::List(nl.a_tilde.clone()),
            b_tilde_uw: None,
            b_tilde_w: list(&nl.b_tilde),
        },
    };
    let g = &config.geometry;
    let (positions_m, distances_m) = match &g.layout {
        Layout::Positions { et, it } => (
            Some(PositionsDoc {
                et: et.clone(),
                it: it.clone(),
            }),
            None,
        ),
        Layout::Distances(d) => (
            None,
            Some(
                (0..d.nrows())
                    .map(|i| (0..d.ncols()).map(|j| d[(i, j)]).collect())
                    .collect(),
            ),
        ),
    };
    let doc = ConfigDoc {
        num_pairs: config.num_pairs,
        p_max_w: list(&config.p_max),
        p_circuit_j: list(&config.p_circuit),
        amp_eff: list(&config.amp_eff),
        mu: list(&config.mu),
        noise_w: list(&config.noise_var),
        e_initial_j: list(&config.e_initial),
        e_max_j: list(&config.e_max),
        eh_model: Some(eh_model),
        csi: Some(CsiDoc {
            rho_h: config.csi.rho_h,
            rho_g: config.csi.rho_g,
            sigma2_h: config.csi.sigma2_h,
            sigma2_g: config.csi.sigma2_g,
            reciprocity: config.csi.reciprocity,
        }),
        geometry: GeometryDoc {
            rician_factor: g.rician_factor,
            ref_attenuation: Some(g.ref_attenuation),
            ref_distance_m: g.ref_distance,
            pathloss_exp: g.pathloss_exp,
            positions_m,
            distances_m,
            ..GeometryDoc::default()
        },
        ..ConfigDoc::default()
    };
    serde_json::to_string_pretty(&doc).expect("config document serializes")
}

// ---------------------------------------------------------------------------
// Decision variables and traces

/// The decision triple: energy waveform `x` (√W), phase-2 powers `p` (W) and
/// the WET fraction `tau`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignVariables {
    pub x: DVector<Complex64>,
    pub p: DVector<f64>,
    pub tau: f64,
}

impl DesignVariables {
    pub fn num_pairs(&self) -> usize {
        self.p.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxOuterIterations,
}

/// State after one alternating (waveform/power, then time-split) round.
#[derive(Clone, Debug, PartialEq)]
pub struct OuterRecord {
    pub outer: usize,
    pub objective: f64,
    pub tau: f64,
    pub max_violation: f64,
    pub inner_iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerRecord {
    pub outer: usize,
    pub inner: usize,
    pub objective_true: f64,
    pub objective_surrogate: f64,
    pub tau: f64,
    pub max_violation: f64,
}

/// Worst surrogate dominance slack and touching error observed while auditing.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AuditSummary {
    pub surrogates: usize,
    pub points: usize,
    pub min_slack: f64,
    pub max_touch_error: f64,
}

impl AuditSummary {
    pub fn merge(&mut self, other: &AuditSummary) {
        if other.surrogates == 0 {
            return;
        }
        if self.surrogates == 0 {
            *self = *other;
            return;
        }
        self.surrogates += other.surrogates;
        self.points += other.points;
        self.min_slack = self.min_slack.min(other.min_slack);
        self.max_touch_error = self.max_touch_error.max(other.max_touch_error);
    }
}

/// Per-iteration history of one optimization run. Record `outer == 0` holds
/// the initial point.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub outer: Vec<OuterRecord>,
    pub inner: Vec<InnerRecord>,
    pub termination: Termination,
    pub audit: Option<AuditSummary>,
}

impl RunTrace {
    pub const CSV_HEADER: &'static str =
        "outer_iter,inner_iter,objective_true,objective_surrogate,tau,max_violation";

    pub fn objectives(&self) -> Vec<f64> {
        self.outer.iter().map(|r| r.objective).collect()
    }

    /// Chronological CSV. Inner rows carry the surrogate optimum; the row
    /// closing each outer iteration (after the time-split update) leaves
    /// `inner_iter` and `objective_surrogate` empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        let mut inner = self.inner.iter().peekable();
        for rec in &self.outer {
            while let Some(r) = inner.next_if(|r| r.outer == rec.outer) {
                out.push_str(&format!(
                    "{},{},{:.12e},{:.12e},{:.12e},{:.6e}\n",
                    r.outer, r.inner, r.objective_true, r.objective_surrogate, r.tau, r.max_violation
                ));
            }
            out.push_str(&format!(
                "{},,{:.12e},,{:.12e},{:.6e}\n",
                rec.outer, rec.objective, rec.tau, rec.max_violation
            ));
        }
        out
    }
}
