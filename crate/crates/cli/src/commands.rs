use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use elastic_ds::geometry::bounding_diameter;
use elastic_ds::synthetic::both_ends_shifted;
use elastic_ds::{
    adapt, bench_sweep, compute_velocities, endpoints_distance, estimate, format_bench_table,
    goal_cosine, mean_squared_error, regenerate_profile, rollout, sample_field, split_demo,
    start_cosine, stitch_chains, train, FieldGrid, GeometricDescriptor, Integrator, Learned,
    Point, ProfileConfig, Rollout, RolloutConfig, Shape, Trajectory,
};
use nalgebra::DVector;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::files::{
    read_json, sha256_hex, write_json, DemoFile, DescriptorFile, DescriptorJson, PolicyFile,
    Provenance,
};
use crate::settings::Settings;
use crate::svg::render_field;
use crate::{
    BenchArgs, Cli, Command, FieldArgs, FitArgs, IntegratorArg, MetricsArgs, RolloutArgs,
    RolloutOptions, SplitArgs, StitchArgs, SynthArgs, TransformArgs,
};

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Fit(a) => fit(cli, a),
        Command::Transform(a) => transform(cli, a),
        Command::Rollout(a) => rollout_cmd(cli, a),
        Command::Field(a) => field(cli, a),
        Command::Metrics(a) => metrics(a),
        Command::Bench(a) => bench(cli, a),
        Command::Stitch(a) => stitch(cli, a),
        Command::Split(a) => split(cli, a),
        Command::Synth(a) => synth(cli, a),
    }
}

fn report(cli: &Cli, line: serde_json::Value) {
    if !cli.quiet {
        println!("{line}");
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn pick_trajectory(file: &DemoFile, index: usize) -> CliResult<Trajectory> {
    let mut trajs = file.trajectories()?;
    if index >= trajs.len() {
        return Err(usage(format!(
            "trajectory {index} requested but the file holds {}",
            trajs.len()
        )));
    }
    Ok(trajs.swap_remove(index))
}

fn point_arg(v: &[f64], d: usize, what: &str) -> CliResult<Point> {
    if v.len() != d {
        return Err(usage(format!("--{what} needs {d} coordinates, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

/// `(offset, angle)` from `dx,dy[,dz],angle`.
fn shift_arg(v: &[f64], d: usize, what: &str) -> CliResult<(DVector<f64>, f64)> {
    if v.len() != d + 1 {
        return Err(usage(format!(
            "--{what} needs {} values (offset then angle), got {}",
            d + 1,
            v.len()
        )));
    }
    Ok((DVector::from_column_slice(&v[..d]), v[d]))
}

fn profile_of(learned: &Learned) -> CliResult<Trajectory> {
    Ok(regenerate_profile(learned.chain.joints(), &learned.profile)?)
}

fn rollout_config(opts: &RolloutOptions, learned: &Learned, diameter: f64) -> CliResult<RolloutConfig> {
    let mut rc = RolloutConfig::for_policy(&learned.policy, diameter);
    if let Some(dt) = opts.dt {
        rc.dt = dt;
    }
    if let Some(n) = opts.max_steps {
        rc.max_steps = n;
    }
    if let Some(r) = opts.radius {
        rc.convergence_radius = r;
    }
    rc.integrator = match opts.integrator {
        IntegratorArg::Euler => Integrator::Euler,
        IntegratorArg::Rk4 => Integrator::Rk4,
    };
    rc.validate().map_err(|e| usage(e.to_string()))?;
    Ok(rc)
}

fn default_rollout_options() -> RolloutOptions {
    RolloutOptions {
        start: None,
        dt: None,
        max_steps: None,
        radius: None,
        integrator: IntegratorArg::Rk4,
    }
}

/// Descriptor with both poses, missing ones taken from the chain ends.
fn complete_descriptor(
    learned: &Learned,
    desc: Option<&GeometricDescriptor>,
) -> CliResult<GeometricDescriptor> {
    let enter = match desc.and_then(|d| d.enter()) {
        Some(p) => p.clone(),
        None => learned.chain.entry_frame()?,
    };
    let exit = match desc.and_then(|d| d.exit()) {
        Some(p) => p.clone(),
        None => learned.chain.exit_frame()?,
    };
    Ok(GeometricDescriptor::both(enter, exit)?)
}

struct Scored {
    run: Rollout,
    start_cos: f64,
    goal_cos: f64,
    endpoints_distance: f64,
}

impl Scored {
    fn json(&self) -> serde_json::Value {
        json!({
            "start_cos": self.start_cos,
            "goal_cos": self.goal_cos,
            "endpoints_distance": self.endpoints_distance,
            "converged": self.run.converged,
            "steps": self.run.trajectory.len() - 1,
        })
    }
}

fn score(
    learned: &Learned,
    desc: Option<&GeometricDescriptor>,
    opts: &RolloutOptions,
) -> CliResult<Scored> {
    let scored = complete_descriptor(learned, desc)?;
    let enter = scored.enter().expect("complete");
    let exit = scored.exit().expect("complete");
    let diameter = bounding_diameter(profile_of(learned)?.points());
    let rc = rollout_config(opts, learned, diameter)?;
    let x0 = match &opts.start {
        Some(v) => point_arg(v, learned.policy.dim(), "start")?,
        None => enter.position().clone(),
    };
    let run = rollout(&learned.policy, &x0, &rc)?;
    Ok(Scored {
        start_cos: start_cosine(&run.trajectory, &scored)?,
        goal_cos: goal_cosine(&run.trajectory, &scored)?,
        endpoints_distance: endpoints_distance(&run.trajectory, enter, exit),
        run,
    })
}

fn stored_descriptor(file: &PolicyFile) -> CliResult<Option<GeometricDescriptor>> {
    file.provenance
        .descriptor
        .as_ref()
        .map(|d| d.to_descriptor(file.dim))
        .transpose()
}

fn fit(cli: &Cli, args: &FitArgs) -> CliResult<()> {
    let mut cfg = Settings::load(cli.config.as_deref())?.pipeline(cli.seed)?;
    if let Some(v) = args.k_min {
        cfg.gmm.k_min = v;
    }
    if let Some(v) = args.k_max {
        cfg.gmm.k_max = v;
    }
    if let Some(v) = args.restarts {
        cfg.gmm.restarts = v;
    }
    let (file, bytes): (DemoFile, _) = read_json(&args.demo)?;
    let demo = pick_trajectory(&file, args.trajectory).map_err(|e| e.context(args.demo.display()))?;
    let t0 = Instant::now();
    let learned = train(&demo, &cfg)?;
    let seconds = t0.elapsed().as_secs_f64();
    let out = PolicyFile::new(&learned, Provenance::new(sha256_hex(&bytes), &demo))?;
    write_json(&args.output, &out)?;
    let with_vel = compute_velocities(&demo)?;
    let mse = mean_squared_error(
        &learned.policy,
        with_vel.points(),
        with_vel.velocities().expect("computed"),
    );
    report(
        cli,
        json!({
            "command": "fit",
            "k": learned.policy.len(),
            "mse": mse,
            "train_seconds": seconds,
            "output": args.output.display().to_string(),
        }),
    );
    Ok(())
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn transform(cli: &Cli, args: &TransformArgs) -> CliResult<()> {
    if same_file(&args.policy, &args.output) {
        return Err(usage("refusing to overwrite the input policy; choose another --output"));
    }
    let cfg = Settings::load(cli.config.as_deref())?.pipeline(cli.seed)?;
    let (file, learned) = PolicyFile::load(&args.policy)?;
    let desc = DescriptorFile::load(&args.descriptor)?;
    let t0 = Instant::now();
    let adapted = adapt(&learned, &desc, &cfg).map_err(|e| CliError::from(e).context("adapting the chain"))?;
    let total = t0.elapsed().as_secs_f64();
    let moved = Learned {
        chain: adapted.chain,
        policy: adapted.policy,
        profile: learned.profile.clone(),
    };
    let mut provenance = file.provenance.clone();
    provenance.descriptor = Some(DescriptorJson::from_descriptor(&desc));
    write_json(&args.output, &PolicyFile::new(&moved, provenance)?)?;
    let scored = score(&moved, Some(&desc), &default_rollout_options())?;
    let mut line = scored.json();
    line["command"] = json!("transform");
    line["transform_seconds"] = json!(adapted.transform_time.as_secs_f64());
    line["estimate_seconds"] = json!(adapted.estimate_time.as_secs_f64());
    line["total_seconds"] = json!(total);
    line["output"] = json!(args.output.display().to_string());
    report(cli, line);
    Ok(())
}

fn rollout_csv(run: &Rollout) -> String {
    let traj = &run.trajectory;
    let d = traj.dim();
    let mut out = String::from("t");
    for i in 0..d {
        let _ = write!(out, ",x{i}");
    }
    for i in 0..d {
        let _ = write!(out, ",v{i}");
    }
    out.push_str(",V\n");
    let vel = traj.velocities().expect("rollouts carry velocities");
    for (((t, p), v), lyap) in traj.timestamps().iter().zip(traj.points()).zip(vel).zip(&run.lyapunov) {
        let _ = write!(out, "{t}");
        for x in p.iter().chain(v.iter()) {
            let _ = write!(out, ",{x}");
        }
        let _ = writeln!(out, ",{lyap}");
    }
    out
}

fn rollout_cmd(cli: &Cli, args: &RolloutArgs) -> CliResult<()> {
    let (file, learned) = PolicyFile::load(&args.policy)?;
    let desc = stored_descriptor(&file)?;
    let scored = score(&learned, desc.as_ref(), &args.rollout)?;
    write_text(&args.output, &rollout_csv(&scored.run))?;
    let end = scored.run.trajectory.end();
    report(
        cli,
        json!({
            "command": "rollout",
            "steps": scored.run.trajectory.len() - 1,
            "converged": scored.run.converged,
            "final_distance": (end - learned.policy.attractor()).norm(),
            "output": args.output.display().to_string(),
        }),
    );
    Ok(())
}

fn field(cli: &Cli, args: &FieldArgs) -> CliResult<()> {
    if args.csv.is_none() && args.svg.is_none() {
        return Err(usage("field needs --csv and/or --svg"));
    }
    let (file, learned) = PolicyFile::load(&args.policy)?;
    let d = learned.policy.dim();
    let profile = profile_of(&learned)?;
    let (mut lo, mut hi) = (profile.points()[0].clone(), profile.points()[0].clone());
    for p in profile.points() {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let pad = 0.15 * bounding_diameter(profile.points());
    lo.add_scalar_mut(-pad);
    hi.add_scalar_mut(pad);
    if d == 3 {
        lo[2] = learned.policy.attractor()[2];
        hi[2] = lo[2];
    }
    if let Some(v) = &args.lo {
        lo = point_arg(v, d, "lo")?;
    }
    if let Some(v) = &args.hi {
        hi = point_arg(v, d, "hi")?;
    }
    let grid = FieldGrid {
        lo,
        hi,
        nx: args.nx,
        ny: args.ny,
    };
    let samples = sample_field(&learned.policy, &grid).map_err(|e| usage(e.to_string()))?;
    if let Some(path) = &args.csv {
        let mut out = String::new();
        for i in 0..d {
            let _ = write!(out, "x{i},");
        }
        for i in 0..d {
            let _ = write!(out, "v{i},");
        }
        out.push_str("speed\n");
        for (x, v) in &samples {
            for c in x.iter().chain(v.iter()) {
                let _ = write!(out, "{c},");
            }
            let _ = writeln!(out, "{}", v.norm());
        }
        write_text(path, &out)?;
    }
    if let Some(path) = &args.svg {
        let mut paths = Vec::new();
        if !args.no_rollout {
            let desc = stored_descriptor(&file)?;
            let scored = score(&learned, desc.as_ref(), &args.rollout)?;
            paths.push(scored.run.trajectory.points().to_vec());
        }
        write_text(
            path,
            &render_field(&samples, args.nx, args.ny, &paths, learned.policy.attractor()),
        )?;
    }
    report(cli, json!({ "command": "field", "samples": samples.len() }));
    Ok(())
}

fn metrics(args: &MetricsArgs) -> CliResult<()> {
    let (file, learned) = PolicyFile::load(&args.policy)?;
    let desc = match &args.descriptor {
        Some(p) => Some(DescriptorFile::load(p)?),
        None => stored_descriptor(&file)?,
    };
    let scored = score(&learned, desc.as_ref(), &args.rollout)?;
    let text = serde_json::to_string_pretty(&scored.json())?;
    if let Some(path) = &args.output {
        write_text(path, &format!("{text}\n"))?;
    }
    println!("{text}");
    Ok(())
}

fn bench(cli: &Cli, args: &BenchArgs) -> CliResult<()> {
    let cfg = Settings::load(cli.config.as_deref())?.pipeline(cli.seed)?;
    let shape = Shape::from_name(&args.shape).ok_or_else(|| {
        let names: Vec<_> = Shape::ALL.iter().map(|s| s.name()).collect();
        usage(format!("unknown shape `{}`; expected one of {}", args.shape, names.join(", ")))
    })?;
    if args.sizes.is_empty() {
        return Err(usage("--sizes is empty"));
    }
    let enter = shift_arg(&args.enter_shift, shape.dim(), "enter-shift")?;
    let exit = shift_arg(&args.exit_shift, shape.dim(), "exit-shift")?;
    let rows = bench_sweep(&args.sizes, args.repeats, &cfg, |n| {
        let demo = shape.demo(n, 2.0)?;
        let desc = both_ends_shifted(&demo, (&enter.0, enter.1), (&exit.0, exit.1))?;
        Ok((demo, desc))
    })?;
    print!("{}", format_bench_table(&rows));
    if let Some(path) = &args.csv {
        let mut out = String::from(
            "samples,components,transform_s,estimate_s,total_s,start_cos,goal_cos,endpoints_distance,converged\n",
        );
        for (n, r) in &rows {
            let _ = writeln!(
                out,
                "{n},{},{},{},{},{},{},{},{}",
                r.components,
                r.transform_time,
                r.estimate_time,
                r.total_time,
                r.start_cos,
                r.goal_cos,
                r.endpoints_distance,
                r.converged
            );
        }
        write_text(path, &out)?;
    }
    Ok(())
}

fn stitch(cli: &Cli, args: &StitchArgs) -> CliResult<()> {
    let cfg = Settings::load(cli.config.as_deref())?.pipeline(cli.seed)?;
    let mut files = Vec::new();
    let mut chains = Vec::new();
    for path in &args.policies {
        let (file, learned) = PolicyFile::load(path)?;
        chains.push(learned.chain.clone());
        files.push((file, learned));
    }
    let stitched = stitch_chains(&chains)?;
    let first = &files[0].1.profile;
    let profile_cfg = ProfileConfig {
        points: files.iter().map(|f| f.1.profile.points).sum::<usize>() - (files.len() - 1),
        dt: first.dt,
        interpolate_between_joints: first.interpolate_between_joints,
        pins_per_link: first.pins_per_link,
    };
    let profile = regenerate_profile(stitched.joints(), &profile_cfg)?;
    let policy = estimate(
        stitched.components(),
        profile.points(),
        profile.velocities().expect("profiles carry velocities"),
        stitched.end(),
        &cfg.estimate,
    )?;
    let hashes: Vec<&str> = files.iter().map(|f| f.0.provenance.demo_sha256.as_str()).collect();
    let span: f64 = files
        .iter()
        .map(|f| f.0.provenance.demo_time_span[1] - f.0.provenance.demo_time_span[0])
        .sum();
    let t0 = files[0].0.provenance.demo_time_span[0];
    let provenance = Provenance {
        demo_sha256: sha256_hex(hashes.join(",").as_bytes()),
        demo_time_span: [t0, t0 + span],
        descriptor: None,
        generator: files[0].0.provenance.generator.clone(),
    };
    let learned = Learned {
        chain: stitched,
        policy,
        profile: profile_cfg,
    };
    write_json(&args.output, &PolicyFile::new(&learned, provenance)?)?;
    report(
        cli,
        json!({
            "command": "stitch",
            "segments": files.len(),
            "k": learned.policy.len(),
            "joints": learned.chain.joints().len(),
            "output": args.output.display().to_string(),
        }),
    );
    Ok(())
}

fn split(cli: &Cli, args: &SplitArgs) -> CliResult<()> {
    let (file, _): (DemoFile, _) = read_json(&args.demo)?;
    let demo = pick_trajectory(&file, args.trajectory)?;
    let d = demo.dim();
    let via: Vec<Point> = if args.via.is_empty() {
        file.via_points()?
    } else {
        args.via
            .iter()
            .map(|v| point_arg(v, d, "via"))
            .collect::<CliResult<_>>()?
    };
    if via.is_empty() {
        return Err(usage("no via-points: pass --via or store them in the demo file"));
    }
    let radius = args
        .radius
        .unwrap_or_else(|| 0.01 * bounding_diameter(demo.points()));
    let segments = split_demo(&demo, &via, radius)?;
    let mut written = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        let path = args
            .prefix
            .with_file_name(format!(
                "{}-{i}.json",
                args.prefix
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "segment".into())
            ));
        write_json(&path, &DemoFile::from_trajectories(std::slice::from_ref(seg))?)?;
        written.push(path.display().to_string());
    }
    report(cli, json!({ "command": "split", "segments": segments.len(), "files": written }));
    Ok(())
}

fn synth(cli: &Cli, args: &SynthArgs) -> CliResult<()> {
    let shape = Shape::from_name(&args.shape)
        .ok_or_else(|| usage(format!("unknown shape `{}`", args.shape)))?;
    if args.samples < 2 || !(args.duration > 0.0 && args.duration.is_finite()) {
        return Err(usage("need at least 2 samples and a positive duration"));
    }
    let demo = shape.demo(args.samples, args.duration)?;
    write_json(&args.output, &DemoFile::from_trajectories(std::slice::from_ref(&demo))?)?;
    if let Some(path) = &args.descriptor {
        let enter = shift_arg(&args.enter_shift, shape.dim(), "enter-shift")?;
        let exit = shift_arg(&args.exit_shift, shape.dim(), "exit-shift")?;
        let desc = both_ends_shifted(&demo, (&enter.0, enter.1), (&exit.0, exit.1))?;
        write_json(path, &DescriptorFile::from_descriptor(&desc))?;
    }
    report(
        cli,
        json!({ "command": "synth", "shape": shape.name(), "samples": demo.len() }),
    );
    Ok(())
}
