use super::tape::{Node, Tape};
use crate::error::{shape_err, Result};
use crate::tensor::RealTensor;

pub fn relu_forward(x: &RealTensor, tape: Option<&mut Tape>) -> RealTensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    if let Some(t) = tape {
        t.push(Node::Relu { input: x.clone() });
    }
    y
}

/// Passes gradient where the input was strictly positive (zero at 0).
pub fn relu_backward(grad_out: &RealTensor, tape: &mut Tape) -> Result<RealTensor> {
    let Node::Relu { input } = tape.pop("relu")? else {
        unreachable!()
    };
    if !grad_out.same_shape(&input) {
        return shape_err(format!(
            "relu gradient {:?} vs input {:?}",
            grad_out.shape(),
            input.shape()
        ));
    }
    let mut g = grad_out.clone();
    for (gv, &xv) in g.data_mut().iter_mut().zip(input.data()) {
        if xv <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-channel spatial mean of a `(C, H, W)` tensor.
pub fn global_avg_pool(x: &RealTensor) -> Result<Vec<f64>> {
    let &[c, h, w] = x.shape() else {
        return shape_err(format!("expected (channels, H, W), got {:?}", x.shape()));
    };
    let hw = (h * w) as f64;
    Ok(x.data()
        .chunks_exact(h * w)
        .take(c)
        .map(|p| p.iter().sum::<f64>() / hw)
        .collect())
}
