use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ConvSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    Linear,
}

/// One layer of a network graph. Per-sample shapes exclude the batch axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2D {
        conv: ConvSpec,
        channels: usize,
    },
    TConv2D {
        conv: ConvSpec,
        channels: usize,
    },
    Reshape {
        shape: Vec<usize>,
    },
    /// Concatenation of every incoming node along the last axis.
    Concat,
    Dropout {
        rate: f64,
    },
    BatchNorm,
    Activation {
        kind: ActivationKind,
    },
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize) -> Self {
        Self::Dense { inputs, outputs }
    }

    pub fn conv(conv: ConvSpec, channels: usize) -> Self {
        Self::Conv2D { conv, channels }
    }

    pub fn tconv(conv: ConvSpec, channels: usize) -> Self {
        Self::TConv2D { conv, channels }
    }

    pub fn reshape(shape: &[usize]) -> Self {
        Self::Reshape {
            shape: shape.to_vec(),
        }
    }

    pub fn relu() -> Self {
        Self::Activation {
            kind: ActivationKind::Relu,
        }
    }

    pub fn sigmoid() -> Self {
        Self::Activation {
            kind: ActivationKind::Sigmoid,
        }
    }

    pub fn linear() -> Self {
        Self::Activation {
            kind: ActivationKind::Linear,
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            Self::Dense { .. } => LayerKind::Dense,
            Self::Conv2D { .. } => LayerKind::Conv2D,
            Self::TConv2D { .. } => LayerKind::TConv2D,
            Self::Reshape { .. } => LayerKind::Reshape,
            Self::Concat => LayerKind::Concat,
            Self::Dropout { .. } => LayerKind::Dropout,
            Self::BatchNorm => LayerKind::BatchNorm,
            Self::Activation { .. } => LayerKind::Activation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LayerKind {
    Dense,
    Conv2D,
    TConv2D,
    Reshape,
    Concat,
    Dropout,
    BatchNorm,
    Activation,
}

impl LayerKind {
    pub const ALL: [LayerKind; 8] = [
        LayerKind::Dense,
        LayerKind::Conv2D,
        LayerKind::TConv2D,
        LayerKind::Reshape,
        LayerKind::Concat,
        LayerKind::Dropout,
        LayerKind::BatchNorm,
        LayerKind::Activation,
    ];
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown layer kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub layer: LayerSpec,
    /// Names of input branches or earlier nodes.
    pub inputs: Vec<String>,
}

/// Declarative layer graph: named input branches, nodes in topological
/// order, and the node whose value is the network output.
///
/// A sample is fed as one flat vector that is split across the inputs in
/// declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub inputs: Vec<InputSpec>,
    pub nodes: Vec<NodeSpec>,
    pub output: String,
}

impl NetworkSpec {
    pub fn input_size(&self) -> usize {
        self.inputs
            .iter()
            .map(|i| i.shape.iter().product::<usize>())
            .sum()
    }
}

#[derive(Debug, Default)]
pub struct NetworkBuilder {
    inputs: Vec<InputSpec>,
    nodes: Vec<NodeSpec>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> String {
        self.inputs.push(InputSpec {
            name: name.to_string(),
            shape: shape.to_vec(),
        });
        name.to_string()
    }

    pub fn named(&mut self, name: &str, from: &[&str], layer: LayerSpec) -> String {
        self.nodes.push(NodeSpec {
            name: name.to_string(),
            layer,
            inputs: from.iter().map(|s| s.to_string()).collect(),
        });
        name.to_string()
    }

    pub fn layer(&mut self, from: &str, layer: LayerSpec) -> String {
        let name = format!(
            "{}_{}",
            layer.kind().to_string().to_lowercase(),
            self.nodes.len()
        );
        self.named(&name, &[from], layer)
    }

    pub fn chain(&mut self, from: &str, layers: impl IntoIterator<Item = LayerSpec>) -> String {
        layers
            .into_iter()
            .fold(from.to_string(), |prev, l| self.layer(&prev, l))
    }

    pub fn concat(&mut self, from: &[&str]) -> String {
        let name = format!("concat_{}", self.nodes.len());
        self.named(&name, from, LayerSpec::Concat)
    }

    pub fn finish(self, output: &str) -> NetworkSpec {
        NetworkSpec {
            inputs: self.inputs,
            nodes: self.nodes,
            output: output.to_string(),
        }
    }
}
