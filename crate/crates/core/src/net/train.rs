//! A desk-scale training run on synthetic p4m-invariant data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grad::{argmax, grad_assembled};
use super::spec::{Network, NetworkSpec, ParamSet};
use crate::capsules::FiberSpec;
use crate::error::{Error, Result};
use crate::field::FeatureField;
use crate::group::{Dihedral, Isometry, TorusGrid};
use crate::induction::steer;
use crate::intertwiner::BasisCatalog;

/// Five-pixel stamps; no two are related by a point-group element, so the
/// class of a stamped field is a p4m invariant.
pub const PATTERNS: [[[i64; 2]; 5]; 4] = [
    // plus
    [[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]],
    // cross of diagonals
    [[0, 0], [1, 1], [1, -1], [-1, 1], [-1, -1]],
    // diagonal
    [[0, 0], [1, 1], [2, 2], [-1, -1], [-2, -2]],
    // bar
    [[0, -2], [0, -1], [0, 0], [0, 1], [0, 2]],
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub grid: usize,
    pub classes: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub epochs: usize,
    pub step: f64,
    /// Amplitude of the uniform background noise.
    pub noise: f64,
    pub seed: u64,
    /// Network to train; the built-in one is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub net: Option<NetworkSpec>,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            grid: 9,
            classes: 4,
            train_size: 96,
            test_size: 96,
            epochs: 400,
            step: 0.5,
            noise: 0.1,
            seed: 0,
            net: None,
        }
    }
}

impl DemoConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("demo config: {e}")))
    }
}

/// The built-in classifier: one hidden layer of regular capsules with relu,
/// projected to A1 for the invariant head.
pub fn default_network(grid: usize, classes: usize) -> NetworkSpec {
    NetworkSpec::from_json(&format!(
        r#"{{"grid": {grid}, "layers": [
            {{"kind": "steerable-conv", "in": [["A1", 1]], "out": [["regular", 8]], "s": 3}},
            {{"kind": "nonlinearity", "tag": "relu"}},
            {{"kind": "steerable-conv", "in": [["regular", 8]], "out": [["A1", 8]], "s": 3}},
            {{"kind": "global-pool"}},
            {{"kind": "affine-readout", "classes": {classes}}}]}}"#
    ))
    .expect("built-in network spec parses")
}

/// One stamped field per sample, classes cycling so the split is balanced.
/// Each stamp is placed at a random position under a random point-group
/// element on top of uniform noise.
pub fn synthetic_dataset<R: Rng + ?Sized>(
    grid: TorusGrid,
    classes: usize,
    count: usize,
    noise: f64,
    rng: &mut R,
) -> Result<Vec<(FeatureField<f32>, usize)>> {
    if classes == 0 || classes > PATTERNS.len() {
        return Err(Error::InvalidArgument(format!(
            "classes must be in 1..={}, got {classes}",
            PATTERNS.len()
        )));
    }
    let fiber = FiberSpec::single("A1", 1);
    let n = grid.side() as i64;
    (0..count)
        .map(|i| {
            let label = i % classes;
            let mut f = FeatureField::<f32>::zeros(grid, fiber.clone())?;
            for v in f.data_mut() {
                *v = (rng.gen_range(-1.0..1.0) * noise) as f32;
            }
            let h = Dihedral::random(rng);
            let at = [rng.gen_range(0..n), rng.gen_range(0..n)];
            for u in PATTERNS[label] {
                let p = h.apply(u);
                let x = grid.wrap_point([at[0] + p[0], at[1] + p[1]]);
                f.at_mut(x)[0] += 1.0;
            }
            Ok((f, label))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemoMetrics {
    pub epochs: usize,
    pub params: usize,
    pub chance: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub transformed_test_accuracy: f64,
    /// `|transformed − untransformed|` test accuracy.
    pub invariance_gap: f64,
    pub loss_history: Vec<f64>,
}

fn accuracy(net: &crate::net::AssembledNet<f32>, data: &[(FeatureField<f32>, usize)]) -> Result<f64> {
    let mut correct = 0;
    for (f, y) in data {
        if argmax(&net.logits(f)?) == *y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len().max(1) as f64)
}

/// Full-batch gradient descent with a fixed step, in 32-bit.
pub fn train_demo(cfg: &DemoConfig, catalog: &BasisCatalog) -> Result<DemoMetrics> {
    let spec = cfg
        .net
        .clone()
        .unwrap_or_else(|| default_network(cfg.grid, cfg.classes));
    if spec.grid != cfg.grid {
        return Err(Error::InvalidArgument(format!(
            "network grid {} differs from the demo grid {}",
            spec.grid, cfg.grid
        )));
    }
    let net = Network::new(spec)?;
    if net.input_fiber() != &FiberSpec::single("A1", 1) || net.num_outputs() != Some(cfg.classes) {
        return Err(Error::InvalidArgument(format!(
            "demo network must map [(A1, 1)] fields to {} logits",
            cfg.classes
        )));
    }
    if cfg.train_size == 0 || cfg.test_size == 0 {
        return Err(Error::InvalidArgument("train and test sets must be non-empty".into()));
    }
    if !cfg.step.is_finite() || cfg.step <= 0.0 {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let grid = net.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train = synthetic_dataset(grid, cfg.classes, cfg.train_size, cfg.noise, &mut rng)?;
    let test = synthetic_dataset(grid, cfg.classes, cfg.test_size, cfg.noise, &mut rng)?;
    let transformed = test
        .iter()
        .map(|(f, y)| Ok((steer(&Isometry::random(&mut rng, grid), f)?, *y)))
        .collect::<Result<Vec<_>>>()?;
    let mut params = ParamSet::random(&net, catalog, &mut rng)?;

    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..=cfg.epochs {
        let assembled = net.assemble::<f32>(&params, catalog)?;
        let g = grad_assembled(&net, &assembled, &train, catalog)?;
        if !g.loss.is_finite() {
            return Err(Error::TrainingFailure(format!(
                "loss became {} at epoch {epoch}",
                g.loss
            )));
        }
        history.push(g.loss);
        if epoch == cfg.epochs {
            break;
        }
        params.axpy(-cfg.step, &g.grads)?;
        if !params.is_finite() {
            return Err(Error::TrainingFailure(format!(
                "parameters became non-finite at epoch {epoch}"
            )));
        }
    }
    let assembled = net.assemble::<f32>(&params, catalog)?;
    let test_accuracy = accuracy(&assembled, &test)?;
    let transformed_test_accuracy = accuracy(&assembled, &transformed)?;
    Ok(DemoMetrics {
        epochs: cfg.epochs,
        params: params.num_params(),
        chance: 1.0 / cfg.classes as f64,
        initial_loss: history[0],
        final_loss: *history.last().expect("at least one loss"),
        train_accuracy: accuracy(&assembled, &train)?,
        test_accuracy,
        transformed_test_accuracy,
        invariance_gap: (transformed_test_accuracy - test_accuracy).abs(),
        loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patterns_are_not_point_group_images_of_each_other() {
        let canon = |pts: &[[i64; 2]]| {
            let mut v: Vec<[i64; 2]> = pts.to_vec();
            let m = *v.iter().min().unwrap();
            for p in &mut v {
                *p = [p[0] - m[0], p[1] - m[1]];
            }
            v.sort();
            v
        };
        for (i, a) in PATTERNS.iter().enumerate() {
            for b in PATTERNS.iter().skip(i + 1) {
                for h in Dihedral::all() {
                    let moved: Vec<[i64; 2]> = b.iter().map(|u| h.apply(*u)).collect();
                    assert_ne!(canon(a), canon(&moved));
                }
            }
        }
    }

    #[test]
    fn dataset_is_balanced_and_stamped() {
        let grid = TorusGrid::new(9).unwrap();
        let data = synthetic_dataset(grid, 4, 8, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let labels: Vec<usize> = data.iter().map(|d| d.1).collect();
        assert_eq!(labels, vec![0, 1, 2, 3, 0, 1, 2, 3]);
        for (f, _) in &data {
            assert_eq!(f.data().iter().sum::<f32>(), 5.0);
        }
    }

    #[test]
    fn zero_epochs_is_near_chance() {
        let cfg = DemoConfig {
            epochs: 0,
            train_size: 40,
            test_size: 40,
            ..DemoConfig::default()
        };
        let m = train_demo(&cfg, &BasisCatalog::new()).unwrap();
        assert_eq!(m.loss_history.len(), 1);
        assert!((m.train_accuracy - 0.25).abs() <= 0.2, "{m:?}");
    }

    #[test]
    fn huge_step_diverges() {
        let cfg = DemoConfig {
            epochs: 30,
            train_size: 16,
            test_size: 4,
            step: 1e3,
            ..DemoConfig::default()
        };
        assert!(matches!(
            train_demo(&cfg, &BasisCatalog::new()),
            Err(Error::TrainingFailure(_))
        ));
    }

    #[test]
    fn config_defaults_fill_in() {
        let cfg = DemoConfig::from_json(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.grid, 9);
        assert!(DemoConfig::from_json(r#"{"epoch": 3}"#).is_err());
    }
}
