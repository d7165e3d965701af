//! Subcommand implementations. The HTTP service reuses [`restore_image`] and
//! [`estimated_map`], so CLI and service produce the same bytes.

use std::path::{Path, PathBuf};

use compdeg_core::attributes::{image_to_map, map_to_image};
use compdeg_core::eval::{eval_estimator_grid, eval_restoration_grid, psnr, GridAxes};
use compdeg_core::network::{forward_estimate, forward_restore, load_weights_as, save_weights};
use compdeg_core::training::{load_dataset, train, OptimizerConfig, TrainingConfig};
use compdeg_core::{
    attributes, degrade, AttributeMap, AttributeTriple, DegradationSpec, Image, NetworkKind,
    NetworkWeights, Seed,
};
use serde::Serialize;

use crate::args::{Command, DegradeArgs, EstimateArgs, EvalArgs, RestoreArgs, TrainArgs};
use crate::error::{CliError, CliResult};

/// Where the restorer gets its attributes from.
pub enum AttributeSource<'a> {
    /// Estimated by the network, then stored at 8 bits like a map file.
    Blind(&'a NetworkWeights),
    Map(AttributeMap),
    Spec(DegradationSpec),
}

/// Clamped estimate rounded to the 8-bit map file lattice.
pub fn estimated_map(estimator: &NetworkWeights, img: &Image) -> compdeg_core::Result<AttributeMap> {
    let raw = forward_estimate(estimator, img)?;
    Ok(image_to_map(&map_to_image(&raw.clamped())))
}

pub fn restore_image(
    restorer: &NetworkWeights,
    img: &Image,
    source: &AttributeSource<'_>,
) -> compdeg_core::Result<Image> {
    let owned;
    let map = match source {
        AttributeSource::Blind(est) => {
            owned = estimated_map(est, img)?;
            &owned
        }
        AttributeSource::Map(m) => m,
        AttributeSource::Spec(spec) => {
            owned = AttributeMap::constant(spec, img.height(), img.width())?;
            &owned
        }
    };
    forward_restore(restorer, img, map)
}

#[derive(Debug, Serialize)]
pub struct EstimateSummary {
    pub means: AttributeTriple,
    /// The means decoded back into degradation parameters.
    pub spec: DegradationSpec,
}

impl EstimateSummary {
    pub fn of(map: &AttributeMap) -> Self {
        let means = map.channel_means();
        EstimateSummary {
            means,
            spec: attributes::decode_attrs(means),
        }
    }
}

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Degrade(a) => cmd_degrade(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Restore(a) => cmd_restore(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Serve(a) => crate::service::run(&a),
    }
}

fn load_image(path: &Path) -> CliResult<Image> {
    Image::load(path).map_err(|e| CliError::io(path.display(), e))
}

fn save_image(img: &Image, path: &Path) -> CliResult<()> {
    img.save(path).map_err(|e| CliError::io(path.display(), e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path.display(), e))
}

fn load_network(path: &Path, kind: NetworkKind) -> CliResult<NetworkWeights> {
    load_weights_as(path, kind).map_err(|e| match e {
        compdeg_core::Error::Io(io) => CliError::io(path.display(), io),
        other => CliError::Validation(format!("{}: {other}", path.display())),
    })
}

fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes")
}

#[derive(Serialize)]
struct DegradeReport {
    spec: DegradationSpec,
    attributes: AttributeTriple,
    seed: u64,
}

pub fn cmd_degrade(a: &DegradeArgs) -> CliResult<()> {
    let quality = if a.no_jpeg { None } else { a.quality };
    let spec = DegradationSpec::new(a.sigma, a.lambda, quality)?;
    let img = load_image(&a.input)?;
    let out = degrade(&img, &spec, Seed(a.seed))?;
    save_image(&out, &a.output)?;
    let report = DegradeReport {
        spec,
        attributes: attributes::encode_spec(&spec),
        seed: a.seed,
    };
    println!("{}", to_json(&report));
    Ok(())
}

/// `weights.cdnw` becomes `weights.<suffix>`.
pub fn sibling_path(weights: &Path, suffix: &str) -> PathBuf {
    weights.with_extension(suffix)
}

pub fn training_config(a: &TrainArgs) -> TrainingConfig {
    let d = TrainingConfig::default();
    TrainingConfig {
        dataset_dir: a.data.clone(),
        patch_size: a.patch.unwrap_or(d.patch_size),
        batch_size: a.batch.unwrap_or(d.batch_size),
        epochs: a.epochs.unwrap_or(d.epochs),
        optimizer: match a.lr {
            Some(lr) => OptimizerConfig::default().with_learning_rate(lr),
            None => d.optimizer,
        },
        seed: a.seed.unwrap_or(d.seed),
        patches_per_epoch: a.patches_per_epoch.unwrap_or(d.patches_per_epoch),
        ..d
    }
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let kind = NetworkKind::from(a.kind);
    let config = training_config(a);
    config.validate()?;
    let (mut weights, history) = train(kind, &config)?;
    weights.metadata.name = kind.name().to_string();
    save_weights(&weights, &a.out).map_err(|e| CliError::io(a.out.display(), e))?;
    write_file(&sibling_path(&a.out, "history.csv"), history.to_csv())?;
    write_file(&sibling_path(&a.out, "config.json"), to_json(&config))?;
    match history.epochs.last() {
        Some(last) => {
            let val = last.val_loss.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
            println!("final train_loss={:.6} val_loss={val}", last.train_loss);
        }
        None => println!("no epochs run; wrote initialized weights"),
    }
    Ok(())
}

pub fn cmd_estimate(a: &EstimateArgs) -> CliResult<()> {
    let weights = load_network(&a.weights, NetworkKind::Estimator)?;
    let img = load_image(&a.input)?;
    let map = estimated_map(&weights, &img)?;
    save_image(&map_to_image(&map), &a.out_map)?;
    let json = to_json(&EstimateSummary::of(&map));
    if let Some(path) = &a.out_json {
        write_file(path, &json)?;
    }
    println!("{json}");
    Ok(())
}

fn explicit_spec(a: &RestoreArgs) -> Option<(Option<f64>, Option<f64>, Option<u8>)> {
    let given = a.sigma.is_some() || a.lambda.is_some() || a.quality.is_some() || a.no_jpeg;
    given.then_some((a.sigma, a.lambda, a.quality))
}

pub fn cmd_restore(a: &RestoreArgs) -> CliResult<()> {
    let spec = explicit_spec(a);
    let sources = [a.est_weights.is_some(), a.map.is_some(), spec.is_some()];
    if sources.iter().filter(|&&s| s).count() != 1 {
        return Err(CliError::Usage(
            "give exactly one attribute source: --est-weights, --map, or --sigma/--lambda/--quality/--no-jpeg"
                .into(),
        ));
    }
    let spec = spec
        .map(|(s, l, q)| DegradationSpec::new(s.unwrap_or(0.0), l.unwrap_or(0.0), q))
        .transpose()?;
    let restorer = load_network(&a.res_weights, NetworkKind::Restorer)?;
    let estimator = a
        .est_weights
        .as_deref()
        .map(|p| load_network(p, NetworkKind::Estimator))
        .transpose()?;
    let img = load_image(&a.input)?;
    let source = if let Some(est) = &estimator {
        AttributeSource::Blind(est)
    } else if let Some(path) = &a.map {
        let map = image_to_map(&load_image(path)?);
        if !map.same_size(&img) {
            return Err(CliError::Validation(format!(
                "map is {}x{} but image is {}x{}",
                map.width(),
                map.height(),
                img.width(),
                img.height()
            )));
        }
        AttributeSource::Map(map)
    } else {
        AttributeSource::Spec(spec.expect("one source is present"))
    };
    let restored = restore_image(&restorer, &img, &source)?;
    save_image(&restored, &a.out)?;
    if let Some(path) = &a.reference {
        let reference = load_image(path)?;
        let before = psnr(&img, &reference)?;
        let after = psnr(&restored, &reference)?;
        println!("psnr input={before:.4} dB restored={after:.4} dB");
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let axes = GridAxes {
        sigmas: a.sigmas.clone(),
        lambdas: a.lambdas.clone(),
        qualities: a.qualities.clone(),
    };
    axes.specs()?;
    let estimator = load_network(&a.est_weights, NetworkKind::Estimator)?;
    let restorer = a
        .res_weights
        .as_deref()
        .map(|p| load_network(p, NetworkKind::Restorer))
        .transpose()?;
    let images = load_dataset(&a.data)?;
    let seed = Seed(a.seed);

    let grid = eval_estimator_grid(&estimator, &images, &axes, seed)?;
    println!("attribute RMSE (blur/noise/jpeg)");
    print!("{}", grid.to_table());
    if let Some(path) = &a.est_csv {
        write_file(path, grid.to_csv())?;
    }
    if let Some(restorer) = &restorer {
        let grid = eval_restoration_grid(&estimator, restorer, &images, &axes, seed)?;
        println!("PSNR dB (blind/nonblind/degraded)");
        print!("{}", grid.to_table());
        if let Some(path) = &a.res_csv {
            write_file(path, grid.to_csv())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use compdeg_core::network::ArchitectureSpec;
    use compdeg_core::synth;

    #[test]
    fn zero_restorer_ignores_every_source() {
        let res = NetworkWeights::zeros(ArchitectureSpec::restorer()).unwrap();
        let est = NetworkWeights::zeros(ArchitectureSpec::estimator()).unwrap();
        let img = synth::scene(Seed(3), 10, 12).quantize();
        let spec = DegradationSpec::new(2.0, 30.0, Some(20)).unwrap();
        for source in [
            AttributeSource::Blind(&est),
            AttributeSource::Map(AttributeMap::constant(&spec, 10, 12).unwrap()),
            AttributeSource::Spec(spec),
        ] {
            assert_eq!(restore_image(&res, &img, &source).unwrap(), img);
        }
    }

    #[test]
    fn estimated_map_is_on_the_byte_lattice() {
        let est = compdeg_core::network::init_network(ArchitectureSpec::estimator(), Seed(1)).unwrap();
        let img = synth::scene(Seed(2), 9, 9);
        let map = estimated_map(&est, &img).unwrap();
        assert!(map.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(image_to_map(&map_to_image(&map)), map);
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling_path(Path::new("a/w.cdnw"), "history.csv"), PathBuf::from("a/w.history.csv"));
        assert_eq!(sibling_path(Path::new("w"), "config.json"), PathBuf::from("w.config.json"));
    }

    #[test]
    fn summary_of_black_map() {
        let map = AttributeMap::uniform(AttributeTriple::default(), 4, 4).unwrap();
        let s = EstimateSummary::of(&map);
        assert_eq!(s.means, AttributeTriple::default());
        assert_eq!(s.spec, DegradationSpec::clean());
    }
}
