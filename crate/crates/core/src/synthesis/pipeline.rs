use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::gains::{dare_gain, dlyap_terminal_cost, GainSet};
use super::lti::{spectral_radius, LtiModel};
use super::sets::{default_directions, enrich_directions, max_admissible_set, rpi_outer, tighten, AdmissibleOptions};
use crate::error::{Error, Result};
use crate::geometry::{BoxSet, HPolytope};

/// Everything the offline design depends on. Its hash keys the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSpec {
    pub model: LtiModel,
    pub x: HPolytope,
    pub u: HPolytope,
    pub w: HPolytope,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Ancillary gain; LQR from `(Q, R)` when absent.
    pub k: Option<DMatrix<f64>>,
    /// Steady-state gain; equal to `K` when absent.
    pub k_bar: Option<DMatrix<f64>>,
    pub lambda: f64,
    /// Powers of `A_Kᵀ` used to enrich the RPI direction template.
    pub template_powers: usize,
    pub rpi_tol: f64,
    pub rpi_max_iter: usize,
    pub k_max: usize,
    pub redundancy_tol: f64,
    /// When false the tube is `{0}` and the constraints are not tightened.
    pub robust: bool,
}

impl SynthesisSpec {
    pub fn key(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self).map_err(|e| Error::Config(format!("cannot hash synthesis spec: {e}")))?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

/// Tube cross-section, tightened constraints and terminal set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSuite {
    pub z_k: HPolytope,
    pub x_c: HPolytope,
    pub u_c: HPolytope,
    /// Terminal set over `(x, x̄, ū)`.
    pub x_f: HPolytope,
    pub lambda: f64,
    /// `support(W, H_{Z,j})` for every row of `Z_K`.
    pub w_support_on_z: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisDiagnostics {
    pub template_size: usize,
    pub rpi_iterations: usize,
    pub rpi_margin: f64,
    pub determination_index: usize,
    pub rho_k: f64,
    pub rho_k_bar: f64,
}

/// Result of the offline design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub key: String,
    pub spec: SynthesisSpec,
    pub gains: GainSet,
    pub sets: SetSuite,
    pub diagnostics: SynthesisDiagnostics,
}

/// Run the full design.
pub fn synthesize(spec: &SynthesisSpec) -> Result<Synthesis> {
    spec.model.validate()?;
    let a = &spec.model.a;
    let b = &spec.model.b;
    let n = spec.model.nx();
    if spec.x.dim() != n || spec.w.dim() != n || spec.u.dim() != spec.model.nu() {
        return Err(Error::Dimension("constraint sets do not match the model".into()));
    }
    let (k_lqr, _) = dare_gain(a, b, &spec.q, &spec.r)?;
    let k = spec.k.clone().unwrap_or_else(|| k_lqr.clone());
    let k_bar = spec.k_bar.clone().unwrap_or_else(|| k.clone());
    let a_k = a - b * &k;
    let rho_k = spectral_radius(&a_k);
    let rho_k_bar = spectral_radius(&(a - b * &k_bar));
    if rho_k >= 1.0 || rho_k_bar >= 1.0 {
        return Err(Error::Synthesis(format!(
            "gains are not stabilising: rho(A-BK) = {rho_k}, rho(A-BK_bar) = {rho_k_bar}"
        )));
    }
    let p = dlyap_terminal_cost(a, b, &k_bar, &spec.q, &spec.r)?;

    let (z_k, template_size, rpi_iterations, rpi_margin) = if spec.robust {
        let base = default_directions(&spec.x, &spec.u, &k);
        let dirs = enrich_directions(&base, &a_k, spec.template_powers);
        let out = rpi_outer(&a_k, &spec.w, &dirs, spec.rpi_tol, spec.rpi_max_iter)?;
        (out.set, dirs.len(), out.iterations, out.rpi_margin)
    } else {
        (BoxSet::symmetric(&vec![0.0; n])?.to_polytope()?, 2 * n, 0, 0.0)
    };
    let (x_c, u_c) = if spec.robust {
        tighten(&spec.x, &spec.u, &z_k, &k)?
    } else {
        (spec.x.clone(), spec.u.clone())
    };
    let adm = max_admissible_set(
        a,
        b,
        &x_c,
        &u_c,
        &k_bar,
        AdmissibleOptions {
            lambda: spec.lambda,
            k_max: spec.k_max,
            redundancy_tol: spec.redundancy_tol,
            steady_state_rows: true,
        },
    )?;
    let w_support_on_z = DVector::from_fn(z_k.n_rows(), |j, _| spec.w.support(&z_k.row(j)).unwrap_or(f64::NAN));
    if w_support_on_z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Synthesis("disturbance set support is not finite".into()));
    }
    Ok(Synthesis {
        key: spec.key()?,
        spec: spec.clone(),
        gains: GainSet { k, k_bar, p },
        sets: SetSuite {
            z_k,
            x_c,
            u_c,
            x_f: adm.set,
            lambda: spec.lambda,
            w_support_on_z,
        },
        diagnostics: SynthesisDiagnostics {
            template_size,
            rpi_iterations,
            rpi_margin,
            determination_index: adm.determination_index,
            rho_k,
            rho_k_bar,
        },
    })
}

/// Cache file for a spec inside `dir`.
pub fn cache_path(dir: &Path, spec: &SynthesisSpec) -> Result<PathBuf> {
    Ok(dir.join(format!("synthesis-{}.json", &spec.key()?[..16])))
}

/// Load a cached design when its key matches, otherwise compute and store it.
pub fn synthesize_cached(spec: &SynthesisSpec, dir: &Path) -> Result<Synthesis> {
    let path = cache_path(dir, spec)?;
    let key = spec.key()?;
    if let Ok(text) = fs::read_to_string(&path) {
        match serde_json::from_str::<Synthesis>(&text) {
            Ok(s) if s.key == key && s.spec == *spec => return Ok(s),
            Ok(_) => log::warn!("synthesis cache {} has a different key; recomputing", path.display()),
            Err(e) => log::warn!("unreadable synthesis cache {}: {e}; recomputing", path.display()),
        }
    }
    let syn = synthesize(spec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let text = serde_json::to_string(&syn).map_err(|e| Error::Config(format!("cannot serialise synthesis: {e}")))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(syn)
}
