//! Subsolution directories: a JSON manifest plus SFLD field files.
//!
//! Layout:
//! - `manifest.json`: law, densities, domain, gauge, waves, time samples
//! - `rho0.sfld`, `m_slope.sfld`, `u_base.sfld`: the time-independent data
//! - `snap_NNN.sfld`: `m`, `dm/dt`, `U` at time sample `NNN`, concatenated

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chi::ChiProfile;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::{sfld, sym_len, Field, ScalarField, SymTensorField, VectorField};
use crate::pressure::PressureLaw;
use crate::subsolution::{Snapshot, Subsolution};
use crate::wave::LocalizedWave;

pub const FORMAT: &str = "wildeuler-subsolution";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub dims: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub law: PressureLaw,
    pub rho_bar: f64,
    pub domain: Domain,
    pub chi: ChiProfile,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub waves: Vec<LocalizedWave>,
    /// `sup_x e` at each time sample.
    pub lambda: Vec<f64>,
    pub u_base_traceless: bool,
    pub snapshots: Vec<String>,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
}

pub fn snapshot_name(i: usize) -> String {
    format!("snap_{i:03}.sfld")
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    std::fs::write(path, to_json(v)?)?;
    Ok(())
}

fn save_field<F: Field>(path: &Path, f: &F) -> Result<()> {
    sfld::save(path, f.grid(), &f.component_slices())
}

/// Writes `sub` with one snapshot per time sample. Returns the manifest.
pub fn save_subsolution(
    dir: &Path,
    sub: &Subsolution,
    config_hash: Option<String>,
    seed: Option<u64>,
) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let grid = sub.grid();
    save_field(&dir.join("rho0.sfld"), &sub.rho0)?;
    save_field(&dir.join("m_slope.sfld"), &sub.m_slope)?;
    save_field(&dir.join("u_base.sfld"), &sub.u_base)?;
    let mut names = Vec::with_capacity(sub.times.len());
    let mut lambda = Vec::with_capacity(sub.times.len());
    for (i, &t) in sub.times.iter().enumerate() {
        let s = sub.snapshot(t);
        lambda.push(sub.e_field(&s).into_iter().fold(f64::NEG_INFINITY, f64::max));
        let name = snapshot_name(i);
        let mut comps = s.m.component_slices();
        comps.extend(s.dmdt.component_slices());
        comps.extend(s.u.component_slices());
        sfld::save(&dir.join(&name), grid, &comps)?;
        names.push(name);
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        dim: grid.dim(),
        dims: grid.dims().to_vec(),
        lower: grid.bbox().lower().to_vec(),
        upper: grid.bbox().upper().to_vec(),
        law: sub.law.clone(),
        rho_bar: sub.rho_bar,
        domain: sub.domain,
        chi: sub.chi,
        horizon: sub.horizon,
        times: sub.times.clone(),
        waves: sub.waves.clone(),
        lambda,
        u_base_traceless: sub.u_base.is_traceless(),
        snapshots: names,
        config_hash,
        seed,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(dir.join(MANIFEST))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.format != FORMAT || m.version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: expected {FORMAT} v{FORMAT_VERSION}, found {} v{}",
            dir.display(),
            m.format,
            m.version
        )));
    }
    if m.snapshots.len() != m.times.len() || m.lambda.len() != m.times.len() {
        return Err(Error::Format("snapshot list does not match the time samples".into()));
    }
    m.law.validate()?;
    Ok(m)
}

/// Rebuilds the subsolution from its manifest and time-independent files.
/// Snapshots are not read; see [`load_snapshot`].
pub fn load_subsolution(dir: &Path) -> Result<(Subsolution, Manifest)> {
    let man = load_manifest(dir)?;
    let rho = sfld::load(&dir.join("rho0.sfld"))?;
    let grid = rho.grid.clone();
    if grid.dims() != man.dims.as_slice() || grid.bbox().lower() != man.lower.as_slice() {
        return Err(Error::Format("rho0.sfld grid differs from the manifest".into()));
    }
    let rho0 = ScalarField::new(grid.clone(), single(rho.components, "rho0.sfld")?)?;
    let ms = sfld::load(&dir.join("m_slope.sfld"))?;
    same_grid(&grid, &ms, "m_slope.sfld")?;
    let m_slope = VectorField::new(grid.clone(), ms.components)?;
    let ub = sfld::load(&dir.join("u_base.sfld"))?;
    same_grid(&grid, &ub, "u_base.sfld")?;
    let u_base = SymTensorField::new(grid, ub.components, man.u_base_traceless)?;
    let sub = Subsolution {
        rho0,
        law: man.law.clone(),
        rho_bar: man.rho_bar,
        domain: man.domain,
        m_slope,
        u_base,
        waves: man.waves.clone(),
        chi: man.chi,
        horizon: man.horizon,
        times: man.times.clone(),
    };
    Ok((sub, man))
}

fn single(mut comps: Vec<Vec<f64>>, name: &str) -> Result<Vec<f64>> {
    if comps.len() != 1 {
        return Err(Error::Format(format!("{name}: expected one component, found {}", comps.len())));
    }
    Ok(comps.pop().unwrap())
}

fn same_grid(grid: &crate::field::Grid, raw: &sfld::RawField, name: &str) -> Result<()> {
    if &raw.grid != grid {
        return Err(Error::Format(format!("{name}: grid differs from rho0.sfld")));
    }
    Ok(())
}

/// Stored snapshot `i` as written by [`save_subsolution`].
pub fn load_snapshot(dir: &Path, man: &Manifest, i: usize) -> Result<Snapshot> {
    let raw = sfld::load(&dir.join(&man.snapshots[i]))?;
    let n = raw.grid.dim();
    let want = 2 * n + sym_len(n);
    if raw.components.len() != want {
        return Err(Error::Format(format!(
            "{}: {} components, expected {want}",
            man.snapshots[i],
            raw.components.len()
        )));
    }
    let mut comps = raw.components;
    let u = comps.split_off(2 * n);
    let dmdt = comps.split_off(n);
    let grid = raw.grid;
    Ok(Snapshot {
        t: man.times[i],
        m: VectorField::new(grid.clone(), comps)?,
        dmdt: VectorField::new(grid.clone(), dmdt)?,
        u: SymTensorField::new(grid, u, false)?,
    })
}

pub fn snapshot_path(dir: &Path, man: &Manifest, i: usize) -> PathBuf {
    dir.join(&man.snapshots[i])
}
