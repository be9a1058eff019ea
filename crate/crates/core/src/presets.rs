//! Named experiment presets: the three benchmark architectures and every
//! published approximation case, so experiments are one command.

use crate::net::{Activation, Layer, NetError, NetworkSpec, Padding};
use crate::net::LossKind;
use crate::polyproj::{Degree, GroupAxis, GroupScheme, GroupSpec};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchId {
    MnistFc,
    MnistCnn,
    CifarCnn,
    /// The unreduced reference model the memory and cost tables compare
    /// against.
    Lenet300_100,
}

impl ArchId {
    pub fn name(&self) -> &'static str {
        match self {
            ArchId::MnistFc => "mnist_fc",
            ArchId::MnistCnn => "mnist_cnn",
            ArchId::CifarCnn => "cifar_cnn",
            ArchId::Lenet300_100 => "lenet_300_100",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "mnist_fc" => Some(ArchId::MnistFc),
            "mnist_cnn" => Some(ArchId::MnistCnn),
            "cifar_cnn" => Some(ArchId::CifarCnn),
            "lenet_300_100" => Some(ArchId::Lenet300_100),
            _ => None,
        }
    }

    /// Builds the layer stack. The CIFAR variant takes grayscale input and
    /// same-padded convolutions; that is the configuration whose parameter
    /// counts match the published tables.
    pub fn network(&self) -> NetworkSpec {
        match self {
            ArchId::MnistFc => NetworkSpec::new(
                vec![28, 28, 1],
                vec![
                    Layer::Flatten,
                    Layer::Dense { n_in: 784, n_out: 64 },
                    Layer::Activation(Activation::Sigmoid),
                    Layer::Dense { n_in: 64, n_out: 32 },
                    Layer::Activation(Activation::Sigmoid),
                    Layer::Dense { n_in: 32, n_out: 10 },
                    Layer::Softmax,
                ],
            ),
            ArchId::MnistCnn => NetworkSpec::new(
                vec![28, 28, 1],
                vec![
                    Layer::Conv2D { kernels: 6, kh: 5, kw: 5, padding: Padding::Valid },
                    Layer::Activation(Activation::Sigmoid),
                    Layer::AvgPool2,
                    Layer::Conv2D { kernels: 12, kh: 5, kw: 5, padding: Padding::Valid },
                    Layer::Activation(Activation::Sigmoid),
                    Layer::AvgPool2,
                    Layer::Flatten,
                    Layer::Dense { n_in: 192, n_out: 10 },
                    Layer::Activation(Activation::Sigmoid),
                ],
            ),
            ArchId::Lenet300_100 => NetworkSpec::new(
                vec![28, 28, 1],
                vec![
                    Layer::Flatten,
                    Layer::Dense { n_in: 784, n_out: 300 },
                    Layer::Activation(Activation::Sigmoid),
                    Layer::Dense { n_in: 300, n_out: 100 },
                    Layer::Activation(Activation::Sigmoid),
                    Layer::Dense { n_in: 100, n_out: 10 },
                    Layer::Softmax,
                ],
            ),
            ArchId::CifarCnn => NetworkSpec::new(
                vec![32, 32, 1],
                vec![
                    Layer::Conv2D { kernels: 32, kh: 5, kw: 5, padding: Padding::Same },
                    Layer::Activation(Activation::Relu),
                    Layer::AvgPool2,
                    Layer::Conv2D { kernels: 64, kh: 5, kw: 5, padding: Padding::Same },
                    Layer::Activation(Activation::Relu),
                    Layer::AvgPool2,
                    Layer::Conv2D { kernels: 128, kh: 5, kw: 5, padding: Padding::Same },
                    Layer::Activation(Activation::Relu),
                    Layer::AvgPool2,
                    Layer::Flatten,
                    Layer::Dense { n_in: 2048, n_out: 128 },
                    Layer::Activation(Activation::Relu),
                    Layer::Dense { n_in: 128, n_out: 10 },
                    Layer::Softmax,
                ],
            ),
        }
        .expect("benchmark architectures compose")
    }

    pub fn default_train(&self) -> TrainConfig {
        match self {
            ArchId::MnistFc | ArchId::Lenet300_100 => TrainConfig {
                learning_rate: 0.1,
                epochs: 200,
                batch_size: 32,
                rng_seed: 42,
                loss: LossKind::CrossEntropy,
            },
            ArchId::MnistCnn => TrainConfig {
                learning_rate: 1.0,
                epochs: 100,
                batch_size: 32,
                rng_seed: 42,
                loss: LossKind::MeanSquaredError,
            },
            ArchId::CifarCnn => TrainConfig {
                learning_rate: 0.001,
                epochs: 20,
                batch_size: 32,
                rng_seed: 42,
                loss: LossKind::CrossEntropy,
            },
        }
    }
}

/// A named configuration: architecture, per-trainable-layer grouping, train
/// defaults and the reference model the memory tables compare against.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub arch: ArchId,
    /// One entry per trainable layer, in network order.
    pub groups: Vec<Option<GroupSpec>>,
    pub train: TrainConfig,
    pub baseline_label: &'static str,
    pub baseline_params: u64,
    /// Reference model whose operation count the computation-reduction rate
    /// divides by, when the published comparison uses one.
    pub baseline_arch: Option<ArchId>,
    /// Published reference accuracy for this configuration, when known.
    pub reference_accuracy: Option<f64>,
}

impl Preset {
    pub fn network(&self) -> NetworkSpec {
        self.arch.network()
    }

    /// Expands the per-trainable-layer entries into a network-aligned scheme.
    pub fn scheme(&self, net: &NetworkSpec) -> Result<GroupScheme, NetError> {
        let trainable = net.trainable_labels();
        assert_eq!(
            trainable.len(),
            self.groups.len(),
            "preset group list matches trainable layer count"
        );
        let mut scheme = GroupScheme::none(net);
        for ((index, _), spec) in trainable.into_iter().zip(&self.groups) {
            scheme.per_layer[index] = *spec;
        }
        Ok(scheme)
    }
}

fn lin(nw: usize, axis: GroupAxis) -> Option<GroupSpec> {
    Some(GroupSpec {
        degree: Degree::Linear,
        group_size: nw,
        axis,
    })
}

fn quad(nw: usize, axis: GroupAxis) -> Option<GroupSpec> {
    Some(GroupSpec {
        degree: Degree::Quadratic,
        group_size: nw,
        axis,
    })
}

const LENET_300_100_PARAMS: u64 = 266_200;
const LENET_5_PARAMS: u64 = 431_000;
const CIFAR_BASELINE_PARAMS: u64 = 520_224;

/// All named presets. The FC and CNN cases mirror the published tables; the
/// final FC case stores the group widths consistent with its printed
/// parameter counts.
pub fn all() -> Vec<Preset> {
    use GroupAxis::{ContiguousFlat as Flat, FilterRow as Row};
    let mut presets = Vec::new();

    let fc = |name, groups, reference| Preset {
        name,
        arch: ArchId::MnistFc,
        groups,
        train: ArchId::MnistFc.default_train(),
        baseline_label: "LeNet 300-100 (32-bit)",
        baseline_params: LENET_300_100_PARAMS,
        baseline_arch: Some(ArchId::Lenet300_100),
        reference_accuracy: reference,
    };
    presets.push(fc("mnist_fc_case0", vec![None, None, None], Some(0.9753)));
    presets.push(fc("mnist_fc_case1", vec![lin(8, Flat), lin(8, Flat), lin(8, Flat)], Some(0.9749)));
    presets.push(fc("mnist_fc_case2", vec![lin(16, Flat), lin(16, Flat), None], Some(0.97)));
    presets.push(fc("mnist_fc_case3", vec![lin(24, Flat), lin(4, Flat), None], Some(0.9644)));
    presets.push(fc("mnist_fc_case4", vec![lin(28, Flat), lin(4, Flat), None], Some(0.9448)));
    presets.push(fc("mnist_fc_case5", vec![quad(28, Flat), quad(8, Flat), None], Some(0.97)));
    presets.push(fc("mnist_fc_case6", vec![quad(28, Flat), quad(16, Flat), None], Some(0.966)));
    presets.push(fc("mnist_fc_case7", vec![quad(32, Flat), quad(16, Flat), None], Some(0.9632)));

    let cnn = |name, groups, reference| Preset {
        name,
        arch: ArchId::MnistCnn,
        groups,
        train: ArchId::MnistCnn.default_train(),
        baseline_label: "LeNet 5 (32-bit)",
        baseline_params: LENET_5_PARAMS,
        baseline_arch: None,
        reference_accuracy: reference,
    };
    presets.push(cnn("mnist_cnn_case0", vec![None, None, None], Some(0.988)));
    presets.push(cnn("mnist_cnn_case1", vec![lin(5, Row), lin(5, Row), lin(6, Flat)], Some(0.982)));
    presets.push(cnn("mnist_cnn_case2", vec![lin(5, Row), lin(5, Row), lin(32, Flat)], Some(0.9763)));
    presets.push(cnn("mnist_cnn_case3", vec![lin(5, Row), lin(5, Row), lin(64, Flat)], Some(0.951)));
    presets.push(cnn("mnist_cnn_case4", vec![lin(5, Row), lin(5, Row), lin(96, Flat)], Some(0.936)));
    presets.push(cnn("mnist_cnn_case5", vec![quad(5, Row), quad(5, Row), quad(192, Flat)], Some(0.934)));
    presets.push(cnn("mnist_cnn_case6", vec![quad(25, Flat), quad(25, Flat), quad(96, Flat)], Some(0.9134)));

    let cifar = |name, groups, reference| Preset {
        name,
        arch: ArchId::CifarCnn,
        groups,
        train: ArchId::CifarCnn.default_train(),
        baseline_label: "CIFAR CNN (32-bit)",
        baseline_params: CIFAR_BASELINE_PARAMS,
        baseline_arch: None,
        reference_accuracy: reference,
    };
    presets.push(cifar("cifar_case0", vec![None, None, None, None, None], Some(0.762)));
    presets.push(cifar(
        "cifar_nw8",
        vec![lin(5, Row), lin(5, Row), lin(5, Row), lin(8, Flat), lin(8, Flat)],
        Some(0.75),
    ));
    presets.push(cifar(
        "cifar_nw16",
        vec![lin(5, Row), lin(5, Row), lin(5, Row), lin(16, Flat), lin(16, Flat)],
        Some(0.736),
    ));
    presets.push(cifar(
        "cifar_nw32",
        vec![lin(5, Row), lin(5, Row), lin(5, Row), lin(32, Flat), lin(32, Flat)],
        Some(0.722),
    ));

    presets.push(Preset {
        name: "lenet_300_100",
        arch: ArchId::Lenet300_100,
        groups: vec![None, None, None],
        train: ArchId::Lenet300_100.default_train(),
        baseline_label: "LeNet 300-100 (32-bit)",
        baseline_params: LENET_300_100_PARAMS,
        baseline_arch: None,
        reference_accuracy: Some(0.984),
    });

    presets
}

pub fn find(name: &str) -> Option<Preset> {
    all().into_iter().find(|p| p.name == name)
}
