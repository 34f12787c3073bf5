//! On-disk dataset layout.
//!
//! ```text
//! <root>/dataset.meta              key=value: length height mu dt steps scenarios
//! <root>/scenario_<id:04>/meta     key=value: id radius center_x center_y u_mean edge_min seed provenance [refinement]
//! <root>/scenario_<id:04>/mesh.msh
//! <root>/scenario_<id:04>/trajectory.bin
//! <root>/scenario_<id:04>/labels_ha.bin   only for high-accuracy datasets
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a dataset
//! back reproduces it bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{GenConfig, Provenance, ScenarioData, ScenarioParams};
use crate::error::{Error, Result};
use crate::kv;
use crate::mesh::{read_mesh, write_mesh};
use crate::solver::Trajectory;

pub fn scenario_dir(root: &Path, id: usize) -> PathBuf {
    root.join(format!("scenario_{id:04}"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn entries(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

pub fn write_scenario(root: &Path, data: &ScenarioData) -> Result<()> {
    let dir = scenario_dir(root, data.params.id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let p = &data.params;
    let mut meta = entries(&[
        ("id", p.id.to_string()),
        ("radius", p.radius.to_string()),
        ("center_x", p.center[0].to_string()),
        ("center_y", p.center[1].to_string()),
        ("u_mean", p.u_mean.to_string()),
        ("edge_min", p.edge_min.to_string()),
        ("seed", p.seed.to_string()),
        ("provenance", Provenance::Native.as_str().to_string()),
    ]);
    write_mesh(&data.mesh, dir.join("mesh.msh"))?;
    data.trajectory.save(dir.join("trajectory.bin"))?;
    if let Some((r, labels)) = &data.labels_ha {
        meta.insert("refinement".into(), r.to_string());
        meta.insert("provenance".into(), Provenance::HighAccuracy.as_str().to_string());
        labels.save(dir.join("labels_ha.bin"))?;
    }
    write_text(&dir.join("meta"), &kv::format(&meta))
}

pub fn read_scenario(root: &Path, id: usize, gen: &GenConfig) -> Result<ScenarioData> {
    let dir = scenario_dir(root, id);
    let what = format!("{}", dir.join("meta").display());
    let meta = kv::parse(&read_text(&dir.join("meta"))?, &what)?;
    let params = ScenarioParams {
        id: kv::get(&meta, "id", &what)?,
        radius: kv::get(&meta, "radius", &what)?,
        center: [kv::get(&meta, "center_x", &what)?, kv::get(&meta, "center_y", &what)?],
        u_mean: kv::get(&meta, "u_mean", &what)?,
        edge_min: kv::get(&meta, "edge_min", &what)?,
        seed: kv::get(&meta, "seed", &what)?,
    };
    if params.id != id {
        return Err(Error::parse(&what, format!("id {} stored under scenario {id}", params.id)));
    }
    let mesh = read_mesh(dir.join("mesh.msh"))?;
    let trajectory = Trajectory::load(dir.join("trajectory.bin"))?;
    let hash = mesh.content_hash();
    let check = |t: &Trajectory, name: &str| {
        if t.mesh_hash != hash || t.num_nodes != mesh.num_nodes() {
            Err(Error::parse(name, "trajectory does not belong to the stored mesh"))
        } else {
            Ok(())
        }
    };
    check(&trajectory, "trajectory.bin")?;
    let labels_ha = match meta.get("refinement") {
        Some(_) => {
            let labels = Trajectory::load(dir.join("labels_ha.bin"))?;
            check(&labels, "labels_ha.bin")?;
            Some((kv::get(&meta, "refinement", &what)?, labels))
        }
        None => None,
    };
    Ok(ScenarioData {
        params,
        domain: gen.domain(&params)?,
        mesh,
        trajectory,
        labels_ha,
    })
}

pub fn write_dataset(root: &Path, gen: &GenConfig, data: &[ScenarioData]) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let meta = entries(&[
        ("length", gen.length.to_string()),
        ("height", gen.height.to_string()),
        ("mu", gen.mu.to_string()),
        ("dt", gen.dt.to_string()),
        ("steps", gen.steps.to_string()),
        ("scenarios", data.len().to_string()),
    ]);
    for d in data {
        write_scenario(root, d)?;
    }
    write_text(&root.join("dataset.meta"), &kv::format(&meta))
}

/// Reads every scenario listed in `dataset.meta`. `workers` is taken from
/// the caller since it is not a property of the data.
pub fn read_dataset(root: &Path, workers: usize) -> Result<(GenConfig, Vec<ScenarioData>)> {
    let path = root.join("dataset.meta");
    let what = format!("{}", path.display());
    let meta = kv::parse(&read_text(&path)?, &what)?;
    let gen = GenConfig {
        length: kv::get(&meta, "length", &what)?,
        height: kv::get(&meta, "height", &what)?,
        mu: kv::get(&meta, "mu", &what)?,
        dt: kv::get(&meta, "dt", &what)?,
        steps: kv::get(&meta, "steps", &what)?,
        workers,
    };
    let n: usize = kv::get(&meta, "scenarios", &what)?;
    let ids: Vec<usize> = (0..n).collect();
    let data = crate::parallel::parallel_map(&ids, workers, |&id| read_scenario(root, id, &gen))?;
    Ok((gen, data))
}
