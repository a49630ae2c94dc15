use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use dpinn::export::{load_field_csv, save_field_csv, save_vtk, NodalField};
use dpinn::fem_oracle::{error_report, solve as fem_solve, ComponentError};
use dpinn::mesh::{save_mesh, Mesh};
use dpinn::model::save_checkpoint;
use dpinn::presets;
use dpinn::train::{evaluate, train};

use crate::runspec::{GenerateEntry, LoadedSpec};
use crate::units::Quantity;
use crate::{CliError, Overrides, Preset};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Invalid(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", path.display())))
}

fn out_dir(ov: &Overrides, spec: Option<&LoadedSpec>) -> Result<PathBuf, CliError> {
    let dir = match (&ov.out, spec) {
        (Some(d), _) => d.clone(),
        (None, Some(s)) => s.default_out(),
        (None, None) => PathBuf::from("."),
    };
    create_dir(&dir)?;
    Ok(dir)
}

const MATERIAL_2D: &str = "[material]\nyoungs_modulus = \"3 GPa\"\npoisson_ratio = 0.3\n";

/// Named meshes and named run-spec texts of one preset.
type PresetFiles = (Vec<(&'static str, Mesh)>, Vec<(&'static str, String)>);

fn preset_files(preset: Preset, gap: f64) -> Result<PresetFiles, CliError> {
    let train = "[train]\nepochs = 20000\nlog_every = 1000\n";
    Ok(match preset {
        Preset::Cantilever => (
            vec![("plate.mesh", presets::block([0.0, 0.0], [2.0, 1.0], [32, 16])?)],
            vec![(
                "run.toml",
                format!(
                    "# Cantilever plate clamped on the left, loaded on the right edge.\n\
                     {MATERIAL_2D}\n[network]\noutput_scale = \"0.1 m\"\n\n{train}\n\
                     [[subdomain]]\nmesh = \"plate.mesh\"\ndirichlet = [{{ set = \"left\" }}]\n\
                     load = [{{ set = \"right\", resultant = [\"0 N\", \"-10 MN\"] }}]\n"
                ),
            )],
        ),
        Preset::Nonconforming => (
            vec![
                ("a.mesh", presets::block([0.0, 0.0], [1.0, 1.0], [8, 7])?),
                ("b.mesh", presets::block([1.0, 0.0], [1.0, 1.0], [12, 11])?),
            ],
            vec![(
                "run.toml",
                format!(
                    "# Plate split into two nonconforming blocks; the finer block is slaved.\n\
                     {MATERIAL_2D}\n[network]\noutput_scale = \"0.1 m\"\n\n{train}\n\
                     [[subdomain]]\nmesh = \"a.mesh\"\ndirichlet = [{{ set = \"left\" }}]\n\n\
                     [[subdomain]]\nmesh = \"b.mesh\"\n\
                     load = [{{ set = \"right\", resultant = [\"0 N\", \"-10 MN\"] }}]\n\n\
                     [[interface]]\nslave = 1\nslave_set = \"left\"\nmaster = 0\n"
                ),
            )],
        ),
        Preset::Gap => {
            let [a, b] = presets::gap_meshes(gap, 10)?;
            let subs = "[[subdomain]]\nmesh = \"a.mesh\"\nNET\
                        dirichlet = [{ set = \"left\" }]\n\
                        load = [{ set = \"right\", resultant = [\"0 N\", \"-5 MN\"] }]\n\n\
                        [[subdomain]]\nmesh = \"b.mesh\"\nNET\
                        dirichlet = [{ set = \"right\" }]\n\
                        load = [{ set = \"left\", resultant = [\"0 N\", \"5 MN\"] }]\n";
            let header = format!("{MATERIAL_2D}\n{train}\n");
            (
                vec![("a.mesh", a), ("b.mesh", b)],
                vec![
                    (
                        "run.toml",
                        format!(
                            "# Two blocks across a {gap} m gap, one network each, no interface coupling.\n\
                             {header}[network]\noutput_scale = \"0.05 m\"\n\n{}",
                            subs.replace("NET", "")
                        ),
                    ),
                    (
                        "run-single.toml",
                        format!(
                            "# Two blocks across a {gap} m gap served by one network.\n\
                             {header}[network]\nwidth = 112\noutput_scale = \"0.05 m\"\n\n{}",
                            subs.replace("NET", "network = 0\n")
                        ),
                    ),
                ],
            )
        }
        Preset::Box => (
            vec![
                ("a.mesh", presets::brick([0.0; 3], [1.0, 1.0, 1.0], [8, 4, 4])?),
                ("b.mesh", presets::brick([1.0, 0.0, 0.0], [2.0, 1.0, 1.0], [12, 5, 5])?),
            ],
            vec![(
                "run.toml",
                format!(
                    "# Solid beam in two nonconforming bricks with a combined end load.\n\
                     [material]\nyoungs_modulus = \"3 GPa\"\npoisson_ratio = 0.3\nmode = \"full_3d\"\n\n\
                     [network]\noutput_scale = \"0.1 m\"\n\n{train}\n\
                     [[subdomain]]\nmesh = \"a.mesh\"\ndirichlet = [{{ set = \"left\" }}]\n\n\
                     [[subdomain]]\nmesh = \"b.mesh\"\n\
                     load = [{{ set = \"right\", resultant = [\"0 N\", \"2.5 MN\", \"2.5 MN\"] }}]\n\n\
                     [[interface]]\nslave = 1\nslave_set = \"left\"\nmaster = 0\n"
                ),
            )],
        ),
        Preset::LShape => {
            let [a, b, c, d] = presets::l_shape_meshes()?;
            (
                vec![("a.mesh", a), ("b.mesh", b), ("c.mesh", c), ("d.mesh", d)],
                vec![(
                    "run.toml",
                    format!(
                        "# L-shaped domain in four blocks with three interfaces.\n\
                         {MATERIAL_2D}\n[network]\noutput_scale = \"0.1 m\"\n\n{train}\n\
                         [[subdomain]]\nmesh = \"a.mesh\"\ndirichlet = [{{ set = \"left\" }}]\n\n\
                         [[subdomain]]\nmesh = \"b.mesh\"\n\n\
                         [[subdomain]]\nmesh = \"c.mesh\"\n\n\
                         [[subdomain]]\nmesh = \"d.mesh\"\n\
                         load = [{{ set = \"top\", resultant = [\"1 MN\", \"-3 MN\"] }}]\n\n\
                         [[interface]]\nslave = 1\nslave_set = \"left\"\nmaster = 0\n\n\
                         [[interface]]\nslave = 1\nslave_set = \"right\"\nmaster = 2\n\n\
                         [[interface]]\nslave = 3\nslave_set = \"bottom\"\nmaster = 2\n"
                    ),
                )],
            )
        }
    })
}

pub fn mesh_gen_preset(preset: Preset, gap: f64, ov: &Overrides) -> Result<(), CliError> {
    let dir = out_dir(ov, None)?;
    let (meshes, specs) = preset_files(preset, gap)?;
    for (name, mesh) in &meshes {
        save_mesh(mesh, dir.join(name))?;
        println!(
            "wrote {} ({} nodes, {} elements)",
            dir.join(name).display(),
            mesh.node_count(),
            mesh.element_count()
        );
    }
    for (name, text) in &specs {
        write_text(&dir.join(name), text)?;
        println!("wrote {}", dir.join(name).display());
    }
    Ok(())
}

pub fn mesh_gen_block(
    origin: &[f64],
    extents: &[f64],
    divisions: &[usize],
    name: &str,
    ov: &Overrides,
) -> Result<(), CliError> {
    let entry = GenerateEntry {
        origin: origin.iter().map(|&v| Quantity(v)).collect(),
        extents: extents.iter().map(|&v| Quantity(v)).collect(),
        divisions: divisions.to_vec(),
    };
    let mesh = entry.build()?;
    let path = out_dir(ov, None)?.join(name);
    save_mesh(&mesh, &path)?;
    println!(
        "wrote {} ({} nodes, {} elements)",
        path.display(),
        mesh.node_count(),
        mesh.element_count()
    );
    Ok(())
}

pub fn pair(runspec: &Path, ov: &Overrides) -> Result<(), CliError> {
    let spec = LoadedSpec::load(runspec)?;
    let problem = spec.problem()?;
    let dir = out_dir(ov, Some(&spec))?;
    let table = problem.constraints();
    println!(
        "{:>5} {:>6} {:>8} {:>12} {:>12} {:>10}",
        "slave", "master", "records", "max_resid", "mean_resid", "max_|xi|"
    );
    let groups: std::collections::BTreeSet<(usize, usize)> = table
        .records
        .iter()
        .map(|r| (r.slave_subdomain, r.master_subdomain))
        .collect();
    for (s, m) in groups {
        let recs: Vec<_> = table
            .records
            .iter()
            .filter(|r| r.slave_subdomain == s && r.master_subdomain == m)
            .collect();
        let max_r = recs.iter().map(|r| r.residual_norm).fold(0.0, f64::max);
        let mean_r = recs.iter().map(|r| r.residual_norm).sum::<f64>() / recs.len() as f64;
        let max_xi = recs
            .iter()
            .flat_map(|r| r.xi.iter().map(|x| x.abs()))
            .fold(0.0, f64::max);
        println!(
            "{s:>5} {m:>6} {:>8} {max_r:>12.3e} {mean_r:>12.3e} {max_xi:>10.6}",
            recs.len()
        );
    }
    let path = dir.join("constraints.txt");
    let mut buf = Vec::new();
    table
        .write(&mut buf)
        .map_err(|e| CliError::Invalid(format!("cannot format constraints: {e}")))?;
    fs::write(&path, buf).map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {} ({} constraints)", path.display(), table.len());
    Ok(())
}

fn export_field(
    dir: &Path,
    stem: &str,
    problem: &dpinn::problem::Problem,
    u: &ndarray::Array2<f64>,
    title: &str,
) -> Result<(), CliError> {
    let field = NodalField::new(problem.global_coordinates(), u.clone())?;
    save_field_csv(dir.join(format!("{stem}.csv")), &field)?;
    save_vtk(dir.join(format!("{stem}.vtk")), &problem.meshes(), u, title)?;
    println!("wrote {0}/{stem}.csv and {0}/{stem}.vtk", dir.display());
    Ok(())
}

pub fn solve(runspec: &Path, ov: &Overrides) -> Result<(), CliError> {
    let spec = LoadedSpec::load(runspec)?;
    let problem = spec.problem()?;
    let mut config = spec.train_config()?;
    if let Some(s) = ov.seed {
        config.seed = s;
    }
    if let Some(w) = ov.workers {
        config.workers = w;
    }
    config.validate()?;
    let dir = out_dir(ov, Some(&spec))?;
    log::info!(
        "training {} network(s) on {} subdomain(s), {} nodes, {} epochs, {} worker(s)",
        problem.networks().len(),
        problem.subdomains().len(),
        problem.total_nodes(),
        config.epochs,
        config.workers
    );
    let (nets, mut history) = train(&problem, &config)?;
    for (i, net) in nets.iter().enumerate() {
        let path = dir.join(format!("network_{i}.ckpt"));
        save_checkpoint(net, &path)?;
        history.checkpoints.push(path);
    }
    let path = dir.join("history.csv");
    let mut file =
        fs::File::create(&path).map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", path.display())))?;
    history
        .write_csv(&mut file)
        .and_then(|_| file.flush())
        .map_err(|e| CliError::Invalid(format!("cannot write {}: {e}", path.display())))?;
    let field = evaluate(&nets, &problem)?;
    export_field(
        &dir,
        "field",
        &problem,
        &field.displacement,
        "dpinn predicted displacement",
    )?;
    if let Some(last) = history.last() {
        println!(
            "final epoch {}: loss {:.6e}, strain energy {:.6e}, external work {:.6e}",
            last.epoch, last.loss, last.strain_energy, last.external_work
        );
    }
    Ok(())
}

pub fn fem(runspec: &Path, ov: &Overrides) -> Result<(), CliError> {
    let spec = LoadedSpec::load(runspec)?;
    let problem = spec.problem()?;
    let dir = out_dir(ov, Some(&spec))?;
    let sol = fem_solve(&problem)?;
    export_field(
        &dir,
        "reference",
        &problem,
        &sol.displacement,
        "dpinn reference displacement",
    )?;
    let peak = sol.displacement.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!(
        "reference solve: relative residual {:.3e}, peak displacement {peak:.6e} m",
        sol.residual
    );
    Ok(())
}

pub fn compare(predicted: &Path, reference: &Path, ov: &Overrides) -> Result<(), CliError> {
    let pred = load_field_csv(predicted)?;
    let refr = load_field_csv(reference)?;
    if pred.coords.dim() != refr.coords.dim() {
        return Err(CliError::Invalid(format!(
            "fields have different shapes: {:?} vs {:?}",
            pred.coords.dim(),
            refr.coords.dim()
        )));
    }
    let span = refr.coords.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mismatch = pred
        .coords
        .iter()
        .zip(&refr.coords)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if mismatch > 1e-9 * span {
        return Err(CliError::Invalid(format!(
            "node coordinates differ by up to {mismatch:e} m; the fields are not on the same mesh"
        )));
    }
    let rep = error_report(&pred.displacement, &refr.displacement)?;
    let names = ["ux", "uy", "uz"];
    let mut rows: Vec<(&str, ComponentError)> = names.iter().copied().zip(rep.components.iter().copied()).collect();
    rows.push(("magnitude", rep.magnitude));
    println!(
        "{:<10} {:>14} {:>12} {:>12}",
        "component", "max_abs [m]", "max_rel", "l2_rel"
    );
    for (n, c) in &rows {
        println!(
            "{n:<10} {:>14.6e} {:>11.4}% {:>11.4}%",
            c.max_abs,
            100.0 * c.max_rel,
            100.0 * c.l2_rel
        );
    }
    if ov.out.is_some() {
        let dir = out_dir(ov, None)?;
        let mut text = String::from("component,max_abs,max_rel,l2_rel\n");
        for (n, c) in &rows {
            text.push_str(&format!("{n},{:e},{:e},{:e}\n", c.max_abs, c.max_rel, c.l2_rel));
        }
        write_text(&dir.join("report.csv"), &text)?;
        println!("wrote {}", dir.join("report.csv").display());
    }
    Ok(())
}
