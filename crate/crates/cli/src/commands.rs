use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use floodrefine::eval::{
    export_panels, parse_summary, render_paper_reference, render_summary, render_table, render_tsv, CellSpec, EvalReport, Runner,
    ABLATION_TAGS, BANNER,
};
use floodrefine::eval::evaluate_samples;
use floodrefine::manifest::{Manifest, Split};
use floodrefine::nn::{check_op, GradCheckConfig, GradCheckReport, OPS};
use floodrefine::raster::{export_image, read_tile, write_tile, Raster, Scenario};
use floodrefine::refiner::{
    check_refiner, infer as infer_tile, metrics_log, train as train_model, Checkpoint, LabelKind, ModelKind, NetCheckSpec,
    TrainConfig,
};
use floodrefine::synth::{gen_dataset, DatasetSpec, NoiseLevel, ScenarioConfig, SceneParams};

use crate::resolve::{io_err, parse_seeds, CliError, CliResult, Settings};
use crate::{BenchArgs, Common, EvalArgs, GenArgs, GradArgs, InferArgs, ReportArgs, TrainArgs, TrainFlags};

const COMMON_KEYS: [&str; 2] = ["out", "jobs"];

const TRAIN_KEYS: [&str; 14] = [
    "epochs",
    "batch_size",
    "learning_rate",
    "lr_schedule",
    "optimizer",
    "momentum",
    "beta1",
    "beta2",
    "epsilon",
    "schedule",
    "weight_pos",
    "levels",
    "base_channels",
    "val_tiles",
];

fn keys(groups: &[&[&'static str]]) -> Vec<&'static str> {
    groups.iter().flat_map(|g| g.iter().copied()).collect()
}

fn settings(common: &Common, keys: &[&str], default_out: &str) -> CliResult<Settings> {
    let mut s = Settings::load(common.config.as_deref(), keys)?;
    s.path_flag("out", &common.out).flag("jobs", &common.jobs);
    s.default("out", default_out).default("jobs", 1);
    Ok(s)
}

fn out_dir(s: &Settings) -> CliResult<PathBuf> {
    let out = s.path("out")?;
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    Ok(out)
}

fn jobs(s: &Settings) -> CliResult<usize> {
    let j: usize = s.get("jobs")?;
    if j == 0 {
        return Err(CliError::Usage("--jobs must be >= 1".into()));
    }
    Ok(j)
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn apply_train_flags(s: &mut Settings, f: &TrainFlags) {
    s.flag("epochs", &f.epochs)
        .flag("batch_size", &f.batch_size)
        .flag("learning_rate", &f.learning_rate)
        .flag("lr_schedule", &f.lr_schedule)
        .flag("optimizer", &f.optimizer)
        .flag("momentum", &f.momentum)
        .flag("beta1", &f.beta1)
        .flag("beta2", &f.beta2)
        .flag("epsilon", &f.epsilon)
        .flag("schedule", &f.schedule)
        .flag("weight_pos", &f.weight_pos)
        .flag("levels", &f.levels)
        .flag("base_channels", &f.base_channels)
        .flag("val_tiles", &f.val_tiles);
    for (k, v) in TrainConfig::default().to_pairs() {
        if TRAIN_KEYS.contains(&k.as_str()) {
            s.default(&k, v);
        }
    }
}

/// Training template from the shared keys plus `extra` pairs.
fn train_config(s: &Settings, extra: &[(&str, String)]) -> CliResult<TrainConfig> {
    let mut pairs: Vec<(&str, &str)> = TRAIN_KEYS.iter().filter_map(|k| s.raw(k).map(|v| (*k, v))).collect();
    pairs.extend(extra.iter().map(|(k, v)| (*k, v.as_str())));
    let cfg = TrainConfig::from_pairs(pairs)?;
    cfg.validate()?;
    Ok(cfg)
}

fn pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Other(e.to_string()))
}

fn scenario_grid(s: &Settings) -> CliResult<Vec<ScenarioConfig>> {
    let scenarios = match s.get::<String>("scenario")?.as_str() {
        "all" => vec![Scenario::Sm, Scenario::Tdc],
        one => vec![Scenario::parse(one)?],
    };
    let noises = match s.get::<String>("noise")?.as_str() {
        "both" => vec![NoiseLevel::Low, NoiseLevel::High],
        one => vec![NoiseLevel::parse(one)?],
    };
    let single = scenarios.len() == 1 && noises.len() == 1;
    let mut grid = Vec::new();
    for &sc in &scenarios {
        for &nl in &noises {
            let mut c = ScenarioConfig::new(sc, nl);
            if single {
                c.name = sc.as_str().to_string();
            }
            c.n_points = s.get("n_points")?;
            c.clusters = s.get("clusters")?;
            c.cluster_sigma_px = s.get("cluster_sigma")?;
            if let Some(r) = s.optional("noise_radius") {
                c.noise_radius_m = r
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad noise_radius {r:?}")))?;
            }
            c.validate()?;
            grid.push(c);
        }
    }
    Ok(grid)
}

pub fn gen(a: &GenArgs) -> CliResult<()> {
    const KEYS: [&str; 17] = [
        "tiles",
        "test_tiles",
        "size",
        "channels",
        "seed",
        "sigma",
        "threshold",
        "scenario",
        "noise",
        "noise_radius",
        "n_points",
        "clusters",
        "cluster_sigma",
        "stamp",
        "coverage",
        "contrast",
        "texture",
    ];
    let mut s = settings(&a.common, &keys(&[&COMMON_KEYS, &KEYS]), "data")?;
    s.flag("tiles", &a.tiles)
        .flag("test_tiles", &a.test_tiles)
        .flag("size", &a.size)
        .flag("channels", &a.channels)
        .flag("seed", &a.seed)
        .flag("sigma", &a.sigma)
        .flag("threshold", &a.threshold)
        .flag("scenario", &a.scenario)
        .flag("noise", &a.noise)
        .flag("noise_radius", &a.noise_radius)
        .flag("n_points", &a.n_points)
        .flag("clusters", &a.clusters)
        .flag("cluster_sigma", &a.cluster_sigma)
        .flag("stamp", &a.stamp)
        .flag("coverage", &a.coverage)
        .flag("contrast", &a.contrast)
        .flag("texture", &a.texture);
    let scene = SceneParams::default();
    let sc = ScenarioConfig::new(Scenario::Tdc, NoiseLevel::Low);
    let bench = DatasetSpec::benchmark(scene.seed);
    s.default("tiles", bench.n_tiles);
    let tiles: usize = s.get("tiles")?;
    s.default("test_tiles", tiles / 5)
        .default("size", scene.width)
        .default("channels", scene.channels)
        .default("seed", scene.seed)
        .default("sigma", bench.sigma)
        .default("threshold", bench.threshold)
        .default("scenario", "all")
        .default("noise", "both")
        .default("noise_radius", "none")
        .default("n_points", sc.n_points)
        .default("clusters", sc.clusters)
        .default("cluster_sigma", sc.cluster_sigma_px)
        .default("stamp", bench.stamp)
        .default("coverage", scene.water_coverage_target)
        .default("contrast", scene.spectral_contrast)
        .default("texture", scene.texture_amplitude);

    let size: usize = s.get("size")?;
    let spec = DatasetSpec {
        n_tiles: tiles,
        test_tiles: s.get("test_tiles")?,
        scene: SceneParams {
            width: size,
            height: size,
            channels: s.get("channels")?,
            water_coverage_target: s.get("coverage")?,
            spectral_contrast: s.get("contrast")?,
            texture_amplitude: s.get("texture")?,
            seed: s.get("seed")?,
            ..scene
        },
        scenarios: scenario_grid(&s)?,
        sigma: s.get("sigma")?,
        threshold: s.get("threshold")?,
        stamp: s.get("stamp")?,
    };
    spec.scene.validate()?;
    let out = out_dir(&s)?;
    let (manifest, sum) = gen_dataset(&spec, &out, jobs(&s)?)?;
    s.echo(&out, "gen")?;
    let n_test = manifest.records_in(Split::Test).count();
    println!("tiles={} train={} test={n_test}", sum.tiles, sum.tiles - n_test);
    println!(
        "water_fraction min={:.4} mean={:.4} max={:.4}",
        sum.water_fraction_min, sum.water_fraction_mean, sum.water_fraction_max
    );
    println!(
        "points_per_tile min={} max={} dropped={}",
        sum.points_min, sum.points_max, sum.dropped_points
    );
    println!("scenarios={}", manifest.scenario_tags().join(","));
    println!("manifest={}", out.join("manifest.tsv").display());
    Ok(())
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    const KEYS: [&str; 5] = ["manifest", "model", "labels", "points", "seed"];
    let mut s = settings(&a.common, &keys(&[&COMMON_KEYS, &KEYS, &TRAIN_KEYS]), "out")?;
    s.path_flag("manifest", &a.manifest)
        .flag("model", &a.model)
        .flag("labels", &a.labels)
        .flag("points", &a.points)
        .flag("seed", &a.seed);
    apply_train_flags(&mut s, &a.train);
    let base = TrainConfig::default();
    s.default("model", "refiner")
        .default("labels", base.label_kind)
        .default("points", "none")
        .default("seed", base.seed);
    s.absolutize(&["manifest"])?;

    let kind = ModelKind::parse(&s.get::<String>("model")?)?;
    let cfg = train_config(
        &s,
        &[
            ("label_kind", s.get("labels")?),
            ("points", s.get("points")?),
            ("seed", s.get("seed")?),
        ],
    )?;
    let manifest = Manifest::load(&s.path("manifest")?)?;
    let out = out_dir(&s)?;
    s.echo(&out, "train")?;
    let ckpt = train_model(&manifest, kind, &cfg)?;
    let ckpt_path = out.join("model.ckpt");
    ckpt.save(&ckpt_path)?;
    write(&out.join("metrics.log"), &metrics_log(&ckpt.history))?;
    if let Some(last) = ckpt.history.last() {
        println!("final {}", last.render());
    }
    println!("steps={} checkpoint={}", ckpt.steps, ckpt_path.display());
    Ok(())
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "tile".into())
}

pub fn infer(a: &InferArgs) -> CliResult<()> {
    const KEYS: [&str; 4] = ["ckpt", "tile", "points", "threshold"];
    let mut s = settings(&a.common, &keys(&[&COMMON_KEYS, &KEYS]), "out")?;
    s.path_flag("ckpt", &a.ckpt)
        .path_flag("tile", &a.tile)
        .path_flag("points", &a.points)
        .flag("threshold", &a.threshold);
    s.default("points", "none").default("threshold", 0.5);
    s.absolutize(&["ckpt", "tile", "points"])?;

    let ckpt = Checkpoint::load(&s.path("ckpt")?)?;
    let tile_path = s.path("tile")?;
    let tile = read_tile(&tile_path)?.into_multispectral()?;
    let points = match s.optional("points") {
        Some(p) => Some(read_tile(Path::new(p))?.into_binary()?),
        None => None,
    };
    let (prob, mask) = infer_tile(&ckpt, &tile, points.as_ref(), s.get("threshold")?)?;
    let out = out_dir(&s)?;
    s.echo(&out, "infer")?;
    let name = stem(&tile_path);
    let files = [
        (out.join(format!("{name}.prob.s2c")), Raster::from(prob.clone())),
        (out.join(format!("{name}.mask.s2c")), Raster::from(mask.clone())),
    ];
    for (p, r) in &files {
        write_tile(r, p)?;
        println!("wrote {}", p.display());
    }
    export_image(&prob, &out.join(format!("{name}.prob.pgm")))?;
    export_image(&mask, &out.join(format!("{name}.mask.pgm")))?;
    println!("water_fraction={:.4}", mask.water_fraction());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    const KEYS: [&str; 5] = ["ckpt", "manifest", "split", "points", "threshold"];
    let mut s = settings(&a.common, &keys(&[&COMMON_KEYS, &KEYS]), "out")?;
    s.path_flag("ckpt", &a.ckpt)
        .path_flag("manifest", &a.manifest)
        .flag("split", &a.split)
        .flag("points", &a.points)
        .flag("threshold", &a.threshold);
    s.default("split", "test").default("points", "none").default("threshold", 0.5);
    s.absolutize(&["ckpt", "manifest"])?;

    let ckpt = Checkpoint::load(&s.path("ckpt")?)?;
    let manifest = Manifest::load(&s.path("manifest")?)?;
    let split = Split::parse(&s.get::<String>("split")?)?;
    let tag = match (ckpt.model.use_points, s.optional("points")) {
        (false, _) => None,
        (true, Some(t)) => Some(t.to_string()),
        (true, None) => ckpt.config.points.clone(),
    };
    let tags: Vec<String> = tag.iter().cloned().collect();
    let samples = manifest.load_split(split, &tags)?;
    let threshold: f64 = s.get("threshold")?;
    let report: EvalReport =
        pool(jobs(&s)?)?.install(|| evaluate_samples(&ckpt, &samples, tag.as_deref(), threshold))?;
    let out = out_dir(&s)?;
    s.echo(&out, "eval")?;
    let text = report.render();
    write(&out.join("eval.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn load_or_generate(s: &Settings, out: &Path, jobs: usize) -> CliResult<Manifest> {
    if let Some(p) = s.optional("manifest") {
        return Ok(Manifest::load(Path::new(p))?);
    }
    let spec = DatasetSpec::benchmark(s.get("data_seed")?);
    let dir = out.join("data");
    let (m, sum) = gen_dataset(&spec, &dir, jobs)?;
    println!("generated {} tiles under {}", sum.tiles, dir.display());
    Ok(m)
}

pub fn benchmark(a: &BenchArgs, ablate: bool) -> CliResult<()> {
    const KEYS: [&str; 5] = ["manifest", "data_seed", "seeds", "points", "panels"];
    let cmd = if ablate { "ablate" } else { "benchmark" };
    let allowed: &[&str] = if ablate { &KEYS[..3] } else { &KEYS };
    let mut s = settings(&a.common, &keys(&[&COMMON_KEYS, allowed, &TRAIN_KEYS]), "out")?;
    if ablate && (a.points.is_some() || a.panels.is_some()) {
        return Err(CliError::Usage("ablate takes no --points or --panels".into()));
    }
    s.path_flag("manifest", &a.manifest)
        .flag("data_seed", &a.data_seed)
        .flag("seeds", &a.seeds)
        .flag("points", &a.points)
        .flag("panels", &a.panels);
    apply_train_flags(&mut s, &a.train);
    s.default("manifest", "none").default("data_seed", 42).default("seeds", "1,2,3,4,5");
    if !ablate {
        s.default("points", floodrefine::eval::BENCHMARK_POINTS).default("panels", 4);
    }
    s.absolutize(&["manifest"])?;

    let seeds = parse_seeds(&s.get::<String>("seeds")?)?;
    let template = train_config(&s, &[])?;
    let jobs = jobs(&s)?;
    let out = out_dir(&s)?;
    s.echo(&out, cmd)?;
    let manifest = load_or_generate(&s, &out, jobs)?;
    let tags: Vec<String> = if ablate {
        ABLATION_TAGS.iter().map(|t| t.to_string()).collect()
    } else {
        vec![s.get("points")?]
    };
    let have = manifest.scenario_tags();
    if let Some(t) = tags.iter().find(|t| !have.contains(t)) {
        return Err(CliError::Io(format!("manifest has no point rasters for scenario {t:?}")));
    }
    let mut runner = Runner::new(&manifest, &tags, template, jobs)?;
    let (table, name) = if ablate {
        (runner.ablation(&seeds)?, "ablation")
    } else {
        (runner.benchmark(&seeds, &tags[0])?, "benchmark")
    };

    let ck_dir = out.join("checkpoints");
    fs::create_dir_all(&ck_dir).map_err(|e| io_err(&ck_dir, e))?;
    for row in &table.rows {
        for &seed in &seeds {
            if let Some(c) = runner.checkpoint(&row.cell, seed) {
                c.save(&ck_dir.join(format!("{}-s{seed}.ckpt", row.cell.id())))?;
            }
        }
    }
    let rendered = render_table(&table);
    write(&out.join(format!("{name}.txt")), &rendered)?;
    write(&out.join(format!("{name}.tsv")), &render_tsv(&table))?;
    write(&out.join(format!("{name}.summary")), &render_summary(&table))?;
    print!("{rendered}");

    let panels: usize = if ablate { 0 } else { s.get("panels")? };
    if panels > 0 {
        let seed = seeds[0];
        let get = |c: CellSpec| {
            runner
                .checkpoint(&c, seed)
                .ok_or_else(|| CliError::Other(format!("no checkpoint for {}", c.id())))
        };
        let unet = get(CellSpec::new(ModelKind::Unet, LabelKind::Coarse, None))?;
        let refiner = get(CellSpec::new(ModelKind::Refiner, LabelKind::Coarse, None))?;
        let with_points = get(CellSpec::new(ModelKind::Refiner, LabelKind::Coarse, Some(&tags[0])))?;
        let samples: Vec<_> = runner.test_samples().iter().take(panels).cloned().collect();
        let n = export_panels(&samples, unet, refiner, with_points, &tags[0], &out.join("panels"))?;
        println!("wrote {n} panels under {}", out.join("panels").display());
    }
    Ok(())
}

pub fn report(a: &ReportArgs) -> CliResult<()> {
    let mut s = settings(&a.common, &keys(&[&COMMON_KEYS, &["summaries"]]), "out")?;
    if !a.summaries.is_empty() {
        let abs: Vec<String> = a
            .summaries
            .iter()
            .map(|p| std::path::absolute(p).map(|p| p.display().to_string()).map_err(|e| io_err(p, e)))
            .collect::<CliResult<_>>()?;
        s.flag("summaries", &Some(abs.join(",")));
    }
    s.default("summaries", "none");
    let mut text = render_paper_reference();
    if let Some(list) = s.optional("summaries") {
        let _ = writeln!(text, "\n{BANNER}");
        for p in list.split(',').map(PathBuf::from) {
            let raw = fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
            for t in parse_summary(&raw)? {
                let _ = writeln!(text, "\n[{}]", p.display());
                text.push_str(&render_table(&t));
            }
        }
    }
    let out = out_dir(&s)?;
    s.echo(&out, "report")?;
    write(&out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn check_line(name: &str, r: &GradCheckReport) -> String {
    format!(
        "{:<10} {} max_rel_err={:.3e} tol={:.1e} checked={} worst={}",
        name,
        if r.passed { "pass" } else { "FAIL" },
        r.max_rel_err,
        r.tol,
        r.checked,
        r.worst
    )
}

pub fn gradcheck(a: &GradArgs) -> CliResult<()> {
    const KEYS: [&str; 7] = ["eps", "tol", "seed", "coords", "levels", "base_channels", "size"];
    let mut s = settings(&a.common, &keys(&[&COMMON_KEYS, &KEYS]), "out")?;
    s.flag("eps", &a.eps)
        .flag("tol", &a.tol)
        .flag("seed", &a.seed)
        .flag("coords", &a.coords)
        .flag("levels", &a.levels)
        .flag("base_channels", &a.base_channels)
        .flag("size", &a.size);
    let g = GradCheckConfig::default();
    let n = NetCheckSpec::default();
    s.default("eps", g.eps)
        .default("tol", g.tol)
        .default("seed", g.seed)
        .default("coords", g.min_coords)
        .default("levels", n.levels)
        .default("base_channels", n.base_channels)
        .default("size", n.size);
    let cfg = GradCheckConfig {
        eps: s.get("eps")?,
        tol: s.get("tol")?,
        seed: s.get("seed")?,
        min_coords: s.get("coords")?,
        ..g
    };
    let spec = NetCheckSpec {
        levels: s.get("levels")?,
        base_channels: s.get("base_channels")?,
        size: s.get("size")?,
        ..n
    };
    let out = out_dir(&s)?;
    s.echo(&out, "gradcheck")?;
    let mut text = String::new();
    let mut failed = Vec::new();
    for op in OPS {
        let r = check_op(op, &cfg, 1.0)?;
        if !r.passed {
            failed.push(op.to_string());
        }
        let _ = writeln!(text, "{}", check_line(op, &r));
    }
    let r = check_refiner(&spec, &cfg, 1.0)?;
    if !r.passed {
        failed.push("refiner".into());
    }
    let _ = writeln!(text, "{}", check_line("refiner", &r));
    write(&out.join("gradcheck.txt"), &text)?;
    print!("{text}");
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("gradient check failed: {}", failed.join(", "))))
    }
}
