use std::fs;
use std::path::Path;

use igc_core::algebra::{assemble_factors, compose_kernel, verify_equivalence};
use igc_core::block::{IgcBlockParams, IgcConfig};
use igc_core::budget::{enumerate_configs, network_budget, BlockFamily};
use igc_core::data::{
    load_checkpoint, load_cifar_dir, nearest_template_accuracy, read_checkpoint_header,
    save_checkpoint, Dataset, SynthSpec,
};
use igc_core::net::{build_network, evaluate, train as train_net, ArchSpec, TrainConfig};
use igc_core::rng::CounterRng;
use igc_core::{Precision, Scalar};

use super::*;

/// Composition tolerance for point-wise kernels.
pub const TOL_POINTWISE: f64 = 1e-12;
/// Composition tolerance for spatial kernels, which accumulate over `S·M` terms.
pub const TOL_SPATIAL: f64 = 1e-10;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn analyze(a: AnalyzeArgs) -> Result<(), Failure> {
    if let Some(path) = &a.arch {
        eprintln!(
            "analyze: arch={} input_hw={} format={:?}",
            path.display(),
            a.input_hw,
            a.format
        );
        let arch = ArchSpec::from_json(&read_text(path)?)?;
        let budget = network_budget(&arch, a.input_hw, arch.n_classes)?;
        let text = match a.format {
            Format::Csv => budget.to_csv(),
            Format::Json => budget.to_json() + "\n",
        };
        return write_or_print(None, &text);
    }
    let target = a.target.ok_or_else(|| usage("--target is required"))?;
    if target == 0 || a.s == 0 {
        return Err(usage("--target and --s must be positive"));
    }
    if !(a.tol >= 0.0 && a.tol < 1.0) {
        return Err(usage("--tol must lie in [0, 1)"));
    }
    let family = match a.block {
        Family::Igc => BlockFamily::Igc,
        Family::Gpc => BlockFamily::Gpc,
    };
    eprintln!(
        "analyze: target={target} s={} block={family:?} tol={} format={:?} markdown={}",
        a.s, a.tol, a.format, a.markdown
    );
    let report = enumerate_configs(target, a.s, a.tol, family);
    let text = if a.markdown {
        report.to_markdown()
    } else {
        match a.format {
            Format::Csv => report.to_csv(),
            Format::Json => report.to_json() + "\n",
        }
    };
    write_or_print(None, &text)
}

pub fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let values = match a.values {
        Some(v) => v,
        None => (1..=a.grid_max).collect(),
    };
    if values.is_empty() || values.contains(&0) {
        return Err(usage("grid values must be positive"));
    }
    if a.trials == 0 {
        return Err(usage("--trials must be positive"));
    }
    eprintln!(
        "verify: values={values:?} k=[1, 3] trials={} seed={}",
        a.trials, a.seed
    );
    println!("L,M,k,trials,max_abs_error,tolerance,pass");
    let mut breaches = Vec::new();
    for &l in &values {
        for &m in &values {
            for k in [1, 3] {
                let config = IgcConfig::new(l, m, k);
                let mut rng = CounterRng::derive(a.seed, &[l as u64, m as u64, k as u64]);
                let params = IgcBlockParams::<f64>::he_init(&config, &mut rng);
                let err = verify_equivalence(&config, &params, a.trials, a.seed)?;
                let tol = if k == 1 { TOL_POINTWISE } else { TOL_SPATIAL };
                let pass = err < tol;
                println!("{l},{m},{k},{},{err:e},{tol:e},{pass}", a.trials);
                if !pass {
                    breaches.push(format!("L={l} M={m} k={k} error {err:e} >= {tol:e}"));
                }
            }
        }
    }
    if breaches.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(breaches.join("; ")))
    }
}

fn synth_spec(s: &SynthArgs, n_classes: usize) -> SynthSpec {
    let mut spec = SynthSpec::new(
        s.synth_seed,
        s.synth_classes.unwrap_or(n_classes),
        s.synth_hw,
    );
    spec.max_shift = s.synth_shift;
    spec.smoothing = s.synth_smoothing;
    spec.noise = s.synth_noise;
    spec
}

/// Training and test splits named by `--data`.
fn load_data(
    data: &str,
    synth: &SynthArgs,
    n_classes: usize,
) -> Result<(Dataset, Dataset), Failure> {
    if data == "synth" {
        let spec = synth_spec(synth, n_classes);
        if spec.n_classes == 0
            || spec.hw == 0
            || synth.synth_per_class == 0
            || synth.synth_test_per_class == 0
        {
            return Err(usage(
                "synthetic classes, side and sample counts must be positive",
            ));
        }
        let (train, test) = spec.train_test(synth.synth_per_class, synth.synth_test_per_class);
        let oracle = nearest_template_accuracy(&test, &spec.templates());
        eprintln!("synth: {spec:?} nearest_template_test_acc={oracle:.4}");
        Ok((train, test))
    } else {
        Ok(load_cifar_dir(Path::new(data))?)
    }
}

fn check_fit(arch: &ArchSpec, data: &Dataset) -> Result<(), Failure> {
    if arch.in_channels != data.channels() {
        return Err(usage(format!(
            "arch expects {} input channels, data has {}",
            arch.in_channels,
            data.channels()
        )));
    }
    if arch.n_classes != data.class_count {
        return Err(usage(format!(
            "arch has {} classes, data has {}",
            arch.n_classes, data.class_count
        )));
    }
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<(), Failure> {
    let arch = ArchSpec::from_json(&read_text(&a.arch)?)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        base_lr: a.lr,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        seed: a.seed,
        augment: a.augment,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    eprintln!(
        "train: arch={} ({}) data={} precision={:?} out_dir={} {cfg:?}",
        a.arch.display(),
        arch.name,
        a.data,
        a.precision,
        a.out_dir.display()
    );
    let (train_set, test_set) = load_data(&a.data, &a.synth, arch.n_classes)?;
    check_fit(&arch, &train_set)?;
    fs::create_dir_all(&a.out_dir)?;
    match a.precision {
        PrecisionArg::Single => run_train::<f32>(&arch, &train_set, &test_set, &cfg, &a.out_dir),
        PrecisionArg::Double => run_train::<f64>(&arch, &train_set, &test_set, &cfg, &a.out_dir),
    }
}

fn run_train<T: Scalar>(
    arch: &ArchSpec,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<(), Failure> {
    let mut net = build_network::<T>(arch, cfg.seed)?;
    eprintln!(
        "train: {} parameters, {} samples",
        net.param_count(),
        train_set.len()
    );
    let history = train_net(&mut net, train_set, Some(test_set), cfg)?;
    fs::write(out_dir.join("history.csv"), history.to_csv())?;
    save_checkpoint(
        &net,
        Some(&train_set.normalization),
        &out_dir.join("model.ckpt"),
    )?;
    if let Some(msg) = &history.aborted {
        return Err(Failure::Io(format!("training diverged: {msg}")));
    }
    if let Some(r) = history.last() {
        println!(
            "epoch {} train_loss {:.6} train_acc {:.4} eval_acc {:.4}",
            r.epoch,
            r.train_loss,
            r.train_acc,
            r.eval_acc.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<(), Failure> {
    let header = read_checkpoint_header(&a.ckpt)?;
    eprintln!(
        "eval: ckpt={} arch={} precision={:?} data={}",
        a.ckpt.display(),
        header.arch.name,
        header.precision,
        a.data
    );
    let (_, test_set) = load_data(&a.data, &a.synth, header.arch.n_classes)?;
    check_fit(&header.arch, &test_set)?;
    let acc = match header.precision {
        Precision::Single => run_eval::<f32>(&a.ckpt, test_set)?,
        Precision::Double => run_eval::<f64>(&a.ckpt, test_set)?,
    };
    println!("accuracy {acc:.6}");
    Ok(())
}

fn run_eval<T: Scalar>(ckpt: &Path, data: Dataset) -> Result<f64, Failure> {
    let (net, norm) = load_checkpoint::<T>(ckpt)?;
    let data = match norm {
        Some(n) => data.with_normalization(n),
        None => data,
    };
    Ok(evaluate(&net, &data)?)
}

pub fn compose(a: ComposeArgs) -> Result<(), Failure> {
    let config = IgcConfig::new(a.l, a.m, a.k);
    config.validate()?;
    eprintln!("compose: L={} M={} k={} seed={}", a.l, a.m, a.k, a.seed);
    let mut rng = CounterRng::derive(a.seed, &[a.l as u64, a.m as u64, a.k as u64]);
    let params = IgcBlockParams::<f64>::he_init(&config, &mut rng);
    let factors = assemble_factors(&config, &params)?;
    let w = compose_kernel(&factors)?;
    println!("kernel_shape {}x{}", w.rows(), w.cols());
    println!("l0_primary {}", factors.wp.l0_norm());
    println!("l0_secondary {}", factors.wd.l0_norm());
    println!("l0_total {}", factors.l0_norm());
    println!("l0_dense {}", w.l0_norm());
    if let Some(out) = &a.out {
        let mut text = String::new();
        for r in 0..w.rows() {
            let row: Vec<String> = (0..w.cols())
                .map(|c| format!("{:e}", w.get(r, c)))
                .collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        write_or_print(Some(out), &text)?;
    }
    Ok(())
}
