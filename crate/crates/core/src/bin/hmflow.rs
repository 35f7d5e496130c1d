use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use hmflow::analytic::{PerturbedMap, RationalMapSpec, TangentPerturbation};
use hmflow::diagnostics::{
    detect_bubbles, fit_loj_exponent, laurent_sweep, loj_csv, loj_samples_from_trace,
    trace_floor, DetectOptions, LojSample, LOJ_CSV_HEADER,
};
use hmflow::energetics::{
    compute_tension, energy_density, repulsion_norm, tension_l2, EnergyReport, REPORT_CSV_HEADER,
};
use hmflow::field::{sample_field_with, MapField, StencilOrder};
use hmflow::flow::{run, FlowStatus, FlowTrace, TRACE_CSV_HEADER};
use hmflow::geometry::{Region, SpherePoint};
use hmflow::io::config::RunConfig;
use hmflow::io::manifest::{self, Manifest, MANIFEST_NAME};
use hmflow::io::snapshot;
use hmflow::io::spec_file::{load_spec, MapSpec};
use hmflow::vec3::Vec3;
use hmflow::HmError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Bad command-line input that clap cannot catch.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A run that finished its bookkeeping but ended in a numerical abort.
#[derive(Debug)]
struct NumericalAbort(String);

impl std::fmt::Display for NumericalAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalAbort {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

#[derive(Parser)]
#[command(name = "hmflow", version, about = "Harmonic map flow laboratory for maps S^2 -> S^2")]
struct Cli {
    /// Run configuration (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default)]
struct GridArgs {
    /// Nodes per chart side (odd, >= 65).
    #[arg(long)]
    n: Option<usize>,
    /// Chart half-width L in (1, 2].
    #[arg(long)]
    half_width: Option<f64>,
    /// Difference stencil order, 2 or 4.
    #[arg(long)]
    stencil: Option<u32>,
}

#[derive(Args, Default)]
struct FlowArgs {
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    tension_stop: Option<f64>,
    #[arg(long)]
    snapshot_every: Option<f64>,
    #[arg(long)]
    record_every: Option<usize>,
    #[arg(long)]
    guard: Option<f64>,
    #[arg(long)]
    epsilon0: Option<f64>,
    #[arg(long)]
    t_start: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a map spec file into an SPHM snapshot.
    Gen {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Energy, energy split and degree of a snapshot over regions.
    Energy {
        snapshot: PathBuf,
        #[arg(long)]
        whole: bool,
        /// cx,cy,cz,r with r a stereographic radius about the center.
        #[arg(long)]
        disk: Vec<String>,
        /// cx,cy,cz,r_in,r_out
        #[arg(long)]
        annulus: Vec<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        stencil: Option<u32>,
    },
    /// Tension norms and the repulsion diagnostic of a snapshot.
    Tension {
        snapshot: PathBuf,
        #[arg(long, default_value_t = 1.5)]
        q: f64,
        #[arg(long)]
        stencil: Option<u32>,
    },
    /// Run the harmonic map flow.
    Flow {
        #[arg(long, conflicts_with = "snapshot", required_unless_present = "snapshot")]
        spec: Option<PathBuf>,
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        id: Option<String>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Lojasiewicz scatter over a family of perturbed maps.
    ScanLoj {
        /// Base map; the identity when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_delimiter = ',')]
        amplitudes: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Bubble centers and outer energy scales of a snapshot.
    Bubbles {
        snapshot: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        r_max: Option<f64>,
        #[arg(long)]
        candidate_radius: Option<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        stencil: Option<u32>,
    },
    /// Three-annulus checks over random truncated Laurent forms.
    Laurent {
        #[arg(long)]
        random: usize,
        #[arg(long, default_value_t = 2.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0.25)]
        beta: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 6)]
        max_n: i32,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Collect trace and scatter CSVs of a directory into plot-ready tables.
    Report {
        dir: PathBuf,
        /// Defaults to `<dir>/report`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        svg: bool,
    },
    /// Recompute the hashes listed in a manifest (file or directory).
    Verify { path: PathBuf },
}

fn stencil_from(k: Option<u32>, default: StencilOrder) -> anyhow::Result<StencilOrder> {
    match k {
        None => Ok(default),
        Some(k) => StencilOrder::from_int(k).ok_or_else(|| usage(format!("--stencil {k}: expected 2 or 4"))),
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn apply_grid(cfg: &mut RunConfig, g: &GridArgs) -> anyhow::Result<()> {
    if let Some(n) = g.n {
        cfg.grid.n = n;
    }
    if let Some(l) = g.half_width {
        cfg.grid.half_width = l;
    }
    cfg.grid.stencil = stencil_from(g.stencil, cfg.grid.stencil)?;
    Ok(())
}

fn apply_flow(cfg: &mut RunConfig, f: &FlowArgs) {
    let c = &mut cfg.flow;
    let set = |dst: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *dst = v;
        }
    };
    set(&mut c.t_max, f.tmax);
    set(&mut c.cfl, f.cfl);
    set(&mut c.tension_stop, f.tension_stop);
    set(&mut c.snapshot_every, f.snapshot_every);
    set(&mut c.energy_blowup_guard, f.guard);
    set(&mut c.epsilon0, f.epsilon0);
    set(&mut c.t_start, f.t_start);
    if let Some(r) = f.record_every {
        c.record_every = r;
    }
}

fn config_table(cfg: &RunConfig, inputs: &[(&str, String)]) -> toml::Table {
    let mut t = toml::Table::try_from(cfg).expect("config is a table");
    let mut inp = toml::Table::new();
    for (k, v) in inputs {
        inp.insert((*k).to_string(), toml::Value::String(v.clone()));
    }
    t.insert("inputs".into(), toml::Value::Table(inp));
    t
}

/// First 12 hex digits of the hash of the config echo.
fn derived_id(table: &toml::Table) -> String {
    manifest::sha256_hex(toml::to_string(table).expect("table serializes").as_bytes())[..12].to_string()
}

fn parse_point(parts: &[f64], flag: &str) -> anyhow::Result<SpherePoint> {
    let v = Vec3::new(parts[0], parts[1], parts[2]);
    if !(v.is_finite() && v.norm() > 0.0) {
        return Err(usage(format!("{flag}: center must be a nonzero vector")));
    }
    Ok(SpherePoint::from_vec(v.normalized()))
}

fn parse_numbers(s: &str, count: usize, flag: &str) -> anyhow::Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("{flag} {s:?}: expected {count} comma-separated numbers")))?;
    if v.len() != count {
        return Err(usage(format!("{flag} {s:?}: expected {count} comma-separated numbers")));
    }
    Ok(v)
}

fn parse_regions(whole: bool, disks: &[String], annuli: &[String]) -> anyhow::Result<Vec<Region>> {
    let mut out = Vec::new();
    if whole {
        out.push(Region::WholeSphere);
    }
    for d in disks {
        let v = parse_numbers(d, 4, "--disk")?;
        out.push(Region::disk(parse_point(&v, "--disk")?, v[3])?);
    }
    for a in annuli {
        let v = parse_numbers(a, 5, "--annulus")?;
        out.push(Region::annulus(parse_point(&v, "--annulus")?, v[3], v[4])?);
    }
    if out.is_empty() {
        out.push(Region::WholeSphere);
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_output(m: &mut Manifest, root: &Path, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
    let p = root.join(name);
    std::fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
    m.record(root, &p)?;
    Ok(p)
}

/// Time label in a `run-<id>-t<time>.sphm` name.
fn time_from_name(path: &Path) -> Option<f64> {
    let name = path.file_name()?.to_str()?;
    let rest = name.strip_prefix("run-")?.strip_suffix(".sphm")?;
    let (_, t) = rest.rsplit_once("-t")?;
    t.parse().ok()
}

fn cmd_gen(cfg: RunConfig, spec: &Path, out: &Path) -> anyhow::Result<()> {
    let map = load_spec(spec)?;
    let field = sample_field_with(&map, cfg.grid.n, cfg.grid.half_width, cfg.grid.stencil)?.synced();
    let table = config_table(&cfg, &[("spec", spec.display().to_string()), ("spec_sha256", manifest::sha256_file(spec)?)]);
    let mut m = Manifest::new("gen", table);
    let root = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    create_dir(&root)?;
    snapshot::save(out, &field)?;
    m.record(&root, out)?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("snapshot");
    m.finish("ok", &root.join(format!("{stem}.manifest.toml")))?;
    println!("wrote {} (N = {}, degree {})", out.display(), field.n(), map.signed_degree());
    Ok(())
}

fn load_snapshot(path: &Path, stencil: Option<u32>) -> anyhow::Result<MapField> {
    let order = stencil_from(stencil, StencilOrder::default())?;
    snapshot::load(path, order).with_context(|| format!("reading {}", path.display()))
}

fn cmd_energy(field: &MapField, regions: &[Region], csv: Option<&Path>) -> anyhow::Result<()> {
    let dens = energy_density(field);
    let mut table = String::from(REPORT_CSV_HEADER);
    table.push('\n');
    for r in regions {
        for w in r.overlap_warnings() {
            log::warn!("{w}");
        }
        let rep = EnergyReport::from_density(field, &dens, r);
        print!("{}", rep.to_key_value());
        println!();
        table.push_str(&rep.to_csv_row());
        table.push('\n');
    }
    if let Some(p) = csv {
        std::fs::write(p, table).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_tension(field: &MapField, q: f64) -> anyhow::Result<()> {
    let t = compute_tension(field);
    let dens = energy_density(field);
    let l2 = tension_l2(&t);
    let rep = repulsion_norm(&dens, q)?;
    println!("tension_l2 = {l2:e}");
    println!("tension_max = {:e}", t.max_norm());
    println!("repulsion_norm = {rep:e}");
    println!("q = {q}");
    if l2 > 0.0 {
        println!("repulsion_over_tension = {:e}", rep / l2);
    }
    Ok(())
}

fn finish_flow(
    m: &mut Manifest,
    dir: &Path,
    id: &str,
    trace: &FlowTrace,
) -> anyhow::Result<()> {
    write_output(m, dir, "trace.csv", trace.to_csv().as_bytes())?;
    for s in &trace.snapshots {
        write_output(m, dir, &snapshot::snapshot_name(id, s.t), &snapshot::encode(&s.field))?;
    }
    Ok(())
}

fn cmd_flow(
    mut cfg: RunConfig,
    spec: Option<&Path>,
    snap: Option<&Path>,
    dir: &Path,
    id: Option<String>,
    t_start_given: bool,
) -> anyhow::Result<()> {
    let (initial, inputs) = match (spec, snap) {
        (Some(s), _) => {
            let map = load_spec(s)?;
            let f = sample_field_with(&map, cfg.grid.n, cfg.grid.half_width, cfg.grid.stencil)?.synced();
            (f, vec![("spec", s.display().to_string()), ("spec_sha256", manifest::sha256_file(s)?)])
        }
        (None, Some(p)) => {
            let f = snapshot::load(p, cfg.grid.stencil)
                .with_context(|| format!("reading {}", p.display()))?;
            cfg.grid.n = f.n();
            cfg.grid.half_width = f.half_width();
            if !t_start_given {
                if let Some(t) = time_from_name(p) {
                    cfg.flow.t_start = t;
                }
            }
            (f, vec![("snapshot", p.display().to_string()), ("snapshot_sha256", manifest::sha256_file(p)?)])
        }
        (None, None) => return Err(usage("one of --spec or --snapshot is required")),
    };
    if let Some(id) = id {
        cfg.run_id = id;
    }
    cfg.validate()?;
    let mut table = config_table(&cfg, &inputs);
    let id = if cfg.run_id.is_empty() { derived_id(&table) } else { cfg.run_id.clone() };
    table.insert("run_id".into(), toml::Value::String(id.clone()));
    create_dir(dir)?;
    let mut m = Manifest::new("flow", table);
    let mpath = dir.join(MANIFEST_NAME);
    let trace = match run(&initial, &cfg.flow) {
        Ok(t) => t,
        Err(e) => {
            m.partial = true;
            m.finish(&format!("error: {e}"), &mpath)?;
            return Err(e.into());
        }
    };
    finish_flow(&mut m, dir, &id, &trace)?;
    m.finish(trace.status.as_str(), &mpath)?;
    let last = trace.rows.last().expect("trace has rows");
    println!("status = {}", trace.status.as_str());
    println!("steps = {}", trace.steps);
    println!("dt = {:e}", trace.dt);
    println!("t = {}", last.t);
    println!("E = {}", last.energy);
    println!("delta = {:e}", last.delta);
    if trace.status == FlowStatus::BlowupDetected {
        return Err(anyhow::Error::new(NumericalAbort(format!(
            "blow-up guard tripped at t = {} (max density {:e})",
            last.t, last.max_density
        ))));
    }
    Ok(())
}

fn cmd_scan_loj(cfg: RunConfig, spec: Option<&Path>, dir: &Path) -> anyhow::Result<()> {
    cfg.validate()?;
    let (base, mut inputs) = match spec {
        Some(s) => (load_spec(s)?, vec![("spec", s.display().to_string()), ("spec_sha256", manifest::sha256_file(s)?)]),
        None => (MapSpec::Rational(RationalMapSpec::identity()), vec![("spec", "identity".to_string())]),
    };
    inputs.push(("family", "perturbed".to_string()));
    create_dir(dir)?;
    let mut m = Manifest::new("scan-loj", config_table(&cfg, &inputs));
    let mpath = dir.join(MANIFEST_NAME);
    let mut samples: Vec<LojSample> = Vec::new();
    let mut dropped = 0;
    for &a in &cfg.scan.amplitudes {
        for &seed in &cfg.scan.seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let src = PerturbedMap {
                base: base.clone(),
                perturbation: TangentPerturbation::random(&mut rng),
                amplitude: a,
            };
            let f = sample_field_with(&src, cfg.grid.n, cfg.grid.half_width, cfg.grid.stencil)?.synced();
            let label = format!("a{a}-s{seed}");
            let trace = match run(&f, &cfg.flow) {
                Ok(t) => t,
                Err(e) => {
                    m.partial = true;
                    m.finish(&format!("error in {label}: {e}"), &mpath)?;
                    return Err(e.into());
                }
            };
            write_output(&mut m, dir, &format!("trace-{label}.csv"), trace.to_csv().as_bytes())?;
            let floor = trace_floor(&trace, cfg.scan.floor_factor, cfg.scan.floor);
            let (s, d) = loj_samples_from_trace(&trace, &label, floor);
            log::info!("{label}: {} samples, {d} dropped below floor {floor:e}", s.len());
            samples.extend(s);
            dropped += d;
        }
    }
    write_output(&mut m, dir, "loj.csv", loj_csv(&samples).as_bytes())?;
    let mut summary = String::new();
    let _ = writeln!(summary, "samples = {}", samples.len());
    let _ = writeln!(summary, "dropped = {dropped}");
    let fit = fit_loj_exponent(&samples);
    match &fit {
        Ok(f) => {
            let _ = writeln!(summary, "slope alpha = {:.6} r2 = {:.6} intercept = {:.6}", f.alpha, f.r2, f.intercept);
        }
        Err(e) => {
            let _ = writeln!(summary, "slope unavailable: {e}");
        }
    }
    write_output(&mut m, dir, "summary.txt", summary.as_bytes())?;
    print!("{summary}");
    match fit {
        Ok(_) => {
            m.finish("ok", &mpath)?;
            Ok(())
        }
        Err(e) => {
            m.partial = true;
            m.finish("fit failed", &mpath)?;
            Err(e.into())
        }
    }
}

fn cmd_bubbles(field: &MapField, opts: &DetectOptions, csv: Option<&Path>) -> anyhow::Result<()> {
    let dens = energy_density(field);
    let found = detect_bubbles(&dens, opts)?;
    let mut table = String::from("cx,cy,cz,lambda,epsilon,r_max,resolution_floor\n");
    for d in &found {
        let c = d.center.vec();
        let _ = writeln!(
            table,
            "{:e},{:e},{:e},{:e},{},{},{}",
            c.x, c.y, c.z, d.lambda, d.epsilon, d.r_max, d.resolution_floor
        );
    }
    println!("bubbles = {}", found.len());
    print!("{table}");
    if let Some(p) = csv {
        std::fs::write(p, table).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_laurent(
    count: usize,
    sigma: f64,
    beta: f64,
    seed: u64,
    max_n: i32,
    out_dir: Option<&Path>,
) -> anyhow::Result<()> {
    let sweep = laurent_sweep(count, sigma, beta, seed, max_n)?;
    let summary = sweep.summary();
    print!("{summary}");
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        let mut t = toml::Table::new();
        t.insert("random".into(), toml::Value::Integer(count as i64));
        t.insert("sigma".into(), toml::Value::Float(sigma));
        t.insert("beta".into(), toml::Value::Float(beta));
        t.insert("seed".into(), toml::Value::Integer(seed as i64));
        t.insert("max_n".into(), toml::Value::Integer(max_n as i64));
        let mut m = Manifest::new("laurent", t);
        write_output(&mut m, dir, "laurent.csv", sweep.to_csv().as_bytes())?;
        write_output(&mut m, dir, "summary.txt", summary.as_bytes())?;
        m.finish("ok", &dir.join(MANIFEST_NAME))?;
    }
    Ok(())
}

/// `(x, y)` pairs of one scatter series.
struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

fn svg_loglog(series: &[Series]) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if !(x1 > x0) {
        x1 = x0 + 1.0;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let (w, h, pad) = (640.0, 480.0, 50.0);
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
    let _ = writeln!(s, r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#, w - 2.0 * pad, h - 2.0 * pad);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12">log10 delta [{x0:.2}, {x1:.2}]</text>"#, pad, h - 15.0);
    let _ = writeln!(s, r#"<text x="5" y="{}" font-size="12">log10 dist [{y0:.2}, {y1:.2}]</text>"#, pad - 10.0);
    for (k, ser) in series.iter().enumerate() {
        let c = colors[k % colors.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" points="{}"><title>{}</title></polyline>"#, pts.join(" "), ser.name);
    }
    s.push_str("</svg>\n");
    s
}

fn cmd_report(dir: &Path, out_dir: Option<&Path>, svg: bool) -> anyhow::Result<()> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut csvs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    let mut traces = String::from("source,t,log10_delta,log10_dist4pi,E\n");
    let mut scatter = String::from("source,log10_delta,log10_dist\n");
    let mut series = Vec::new();
    let mut used = 0;
    for p in &csvs {
        let text = std::fs::read_to_string(p)?;
        let name = p.file_name().and_then(|s| s.to_str()).unwrap_or("?").to_string();
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header == TRACE_CSV_HEADER {
            let mut pts = Vec::new();
            for l in lines {
                let v: Vec<f64> = l.split(',').filter_map(|x| x.parse().ok()).collect();
                if v.len() != 8 || v[4] <= 0.0 || v[5] <= 0.0 {
                    continue;
                }
                let (ld, ls) = (v[4].log10(), v[5].log10());
                let _ = writeln!(traces, "{name},{:e},{ld:e},{ls:e},{:e}", v[0], v[1]);
                pts.push((ld, ls));
            }
            series.push(Series { name: name.clone(), points: pts });
            used += 1;
        } else if header == LOJ_CSV_HEADER {
            let mut pts = Vec::new();
            for l in lines {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() != 4 {
                    continue;
                }
                let (Ok(a), Ok(b)) = (f[1].parse::<f64>(), f[2].parse::<f64>()) else { continue };
                let (ld, ls) = (a / std::f64::consts::LN_10, b / std::f64::consts::LN_10);
                let _ = writeln!(scatter, "{},{ld:e},{ls:e}", f[0]);
                pts.push((ld, ls));
            }
            series.push(Series { name: name.clone(), points: pts });
            used += 1;
        }
    }
    if used == 0 {
        println!("no inputs in {}", dir.display());
        return Ok(());
    }
    let out = out_dir.map(Path::to_path_buf).unwrap_or_else(|| dir.join("report"));
    create_dir(&out)?;
    let mut t = toml::Table::new();
    t.insert("dir".into(), toml::Value::String(dir.display().to_string()));
    t.insert("svg".into(), toml::Value::Boolean(svg));
    let mut m = Manifest::new("report", t);
    write_output(&mut m, &out, "report_traces.csv", traces.as_bytes())?;
    write_output(&mut m, &out, "report_loj.csv", scatter.as_bytes())?;
    if svg {
        write_output(&mut m, &out, "report_loglog.svg", svg_loglog(&series).as_bytes())?;
    }
    m.finish("ok", &out.join(MANIFEST_NAME))?;
    println!("inputs = {used}");
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_verify(path: &Path) -> anyhow::Result<()> {
    let mpath = if path.is_dir() { path.join(MANIFEST_NAME) } else { path.to_path_buf() };
    let (m, issues) = manifest::verify(&mpath)?;
    for i in &issues {
        println!("FAIL {i}");
    }
    println!("checked = {}", m.outputs.len());
    println!("status = {}", m.status);
    if !issues.is_empty() {
        bail!(HmError::Format(format!("{} of {} outputs failed verification", issues.len(), m.outputs.len())));
    }
    println!("ok");
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let base = load_config(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Gen { spec, out, grid } => {
            let mut cfg = base;
            apply_grid(&mut cfg, &grid)?;
            cfg.validate()?;
            cmd_gen(cfg, &spec, &out)
        }
        Cmd::Energy { snapshot, whole, disk, annulus, csv, stencil } => {
            let regions = parse_regions(whole, &disk, &annulus)?;
            let f = load_snapshot(&snapshot, stencil)?;
            cmd_energy(&f, &regions, csv.as_deref())
        }
        Cmd::Tension { snapshot, q, stencil } => cmd_tension(&load_snapshot(&snapshot, stencil)?, q),
        Cmd::Flow { spec, snapshot, out_dir, id, grid, flow } => {
            let mut cfg = base;
            apply_grid(&mut cfg, &grid)?;
            apply_flow(&mut cfg, &flow);
            cmd_flow(cfg, spec.as_deref(), snapshot.as_deref(), &out_dir, id, flow.t_start.is_some())
        }
        Cmd::ScanLoj { spec, out_dir, amplitudes, seeds, grid, flow } => {
            let mut cfg = base;
            apply_grid(&mut cfg, &grid)?;
            apply_flow(&mut cfg, &flow);
            if let Some(a) = amplitudes {
                cfg.scan.amplitudes = a;
            }
            if let Some(s) = seeds {
                cfg.scan.seeds = s;
            }
            cmd_scan_loj(cfg, spec.as_deref(), &out_dir)
        }
        Cmd::Bubbles { snapshot, epsilon, r_max, candidate_radius, csv, stencil } => {
            let mut opts = DetectOptions::default();
            if let Some(e) = epsilon {
                opts.epsilon = e;
            }
            if let Some(r) = r_max {
                opts.r_max = r;
            }
            if let Some(r) = candidate_radius {
                opts.candidate_radius = r;
            }
            cmd_bubbles(&load_snapshot(&snapshot, stencil)?, &opts, csv.as_deref())
        }
        Cmd::Laurent { random, sigma, beta, seed, max_n, out_dir } => {
            cmd_laurent(random, sigma, beta, seed.unwrap_or(base.seed), max_n, out_dir.as_deref())
        }
        Cmd::Report { dir, out_dir, svg } => cmd_report(&dir, out_dir.as_deref(), svg),
        Cmd::Verify { path } => cmd_verify(&path),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    if e.downcast_ref::<NumericalAbort>().is_some() {
        return EXIT_NUMERICAL;
    }
    match e.downcast_ref::<HmError>() {
        Some(HmError::StepTooLarge { .. } | HmError::NonFinite { .. }) => EXIT_NUMERICAL,
        _ => EXIT_VALIDATION,
    }
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("HMFLOW_THREADS") else {
        return Ok(());
    };
    let k: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&k| k >= 1)
        .ok_or_else(|| usage(format!("HMFLOW_THREADS={v:?}: expected a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(k)
        .build_global()
        .map_err(|e| anyhow!("thread pool: {e}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = init_threads().and_then(|_| dispatch(cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
