use crate::error::{Error, Result};
use crate::tensor::RealTensor;

/// Cached forward state of one layer application.
#[derive(Clone, Debug)]
pub(crate) enum Node {
    Conv2d {
        input: RealTensor,
    },
    Relu {
        input: RealTensor,
    },
    SqueezeExcitation {
        input: RealTensor,
        pooled: Vec<f64>,
        hidden_pre: Vec<f64>,
        gate: Vec<f64>,
    },
}

impl Node {
    fn kind(&self) -> &'static str {
        match self {
            Node::Conv2d { .. } => "conv2d",
            Node::Relu { .. } => "relu",
            Node::SqueezeExcitation { .. } => "squeeze-excitation",
        }
    }
}

/// Forward record for reverse-mode differentiation. Backward functions pop
/// nodes, so they must be called in exactly the reverse order of the
/// forward calls that pushed them.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn push(&mut self, node: Node) {
        self.nodes.push(node);
    }

    pub(crate) fn pop(&mut self, expected: &'static str) -> Result<Node> {
        match self.nodes.pop() {
            None => Err(Error::Tape(format!("expected a {expected} node, tape is empty"))),
            Some(n) if n.kind() == expected => Ok(n),
            Some(n) => {
                let found = n.kind();
                self.nodes.push(n);
                Err(Error::Tape(format!(
                    "expected a {expected} node, found {found}"
                )))
            }
        }
    }
}
