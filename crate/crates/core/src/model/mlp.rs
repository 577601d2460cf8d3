use crate::error::{shape_err, Error, Result};
use crate::matrix::Matrix;
use crate::nn::{relu, relu_backward, Affine, BatchNorm, Mode};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// The feature-interaction network between concatenated embeddings and the
/// output logit.
pub trait Interaction<T: Scalar> {
    fn input_width(&self) -> usize;

    /// Logits `[B x 1]`, caching what `backward` needs.
    fn forward(&mut self, x: &Matrix<T>, mode: Mode) -> Result<Matrix<T>>;

    /// Eval-mode logits without touching any state.
    fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>>;

    /// Input gradient plus parameter gradients ordered as [`Interaction::params`].
    fn backward(&mut self, dlogits: &Matrix<T>) -> Result<(Matrix<T>, Vec<Matrix<T>>)>;

    fn params(&self) -> Vec<&Matrix<T>>;

    fn params_mut(&mut self) -> Vec<&mut Matrix<T>>;
}

/// `affine -> [batchnorm] -> relu`.
#[derive(Debug, Clone)]
pub struct MlpLayer<T> {
    pub affine: Affine<T>,
    pub bn: Option<BatchNorm<T>>,
    pre_activation: Option<Matrix<T>>,
}

/// Multi-layer perceptron with a single-logit head.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    pub layers: Vec<MlpLayer<T>>,
    pub head: Affine<T>,
}

impl<T: Scalar> Mlp<T> {
    pub fn new(input: usize, hidden: &[usize], batchnorm: bool, rng: &mut Rng) -> Self {
        let mut width = input;
        let mut layers = Vec::with_capacity(hidden.len());
        for &h in hidden {
            layers.push(MlpLayer {
                affine: Affine::new(width, h, rng),
                bn: batchnorm.then(|| BatchNorm::new(h)),
                pre_activation: None,
            });
            width = h;
        }
        Self {
            layers,
            head: Affine::new(width, 1, rng),
        }
    }

    pub fn from_parts(
        layers: Vec<(Affine<T>, Option<BatchNorm<T>>)>,
        head: Affine<T>,
    ) -> Result<Self> {
        let mlp = Self {
            layers: layers
                .into_iter()
                .map(|(affine, bn)| MlpLayer {
                    affine,
                    bn,
                    pre_activation: None,
                })
                .collect(),
            head,
        };
        let mut width = mlp.input_width();
        for l in &mlp.layers {
            if l.affine.fan_in() != width {
                return Err(shape_err(
                    l.affine.weight.shape_str(),
                    format!("width {width}"),
                ));
            }
            width = l.affine.fan_out();
        }
        if mlp.head.fan_in() != width || mlp.head.fan_out() != 1 {
            return Err(shape_err(
                mlp.head.weight.shape_str(),
                format!("[{width}x1]"),
            ));
        }
        Ok(mlp)
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.affine.fan_out()).collect()
    }

    pub fn has_batchnorm(&self) -> bool {
        self.layers.iter().any(|l| l.bn.is_some())
    }
}

impl<T: Scalar> Interaction<T> for Mlp<T> {
    fn input_width(&self) -> usize {
        self.layers
            .first()
            .map_or(self.head.fan_in(), |l| l.affine.fan_in())
    }

    fn forward(&mut self, x: &Matrix<T>, mode: Mode) -> Result<Matrix<T>> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            let mut z = layer.affine.forward(&h)?;
            if let Some(bn) = &mut layer.bn {
                z = bn.forward(&z, mode)?;
            }
            h = relu(&z);
            layer.pre_activation = Some(z);
        }
        self.head.forward(&h)
    }

    fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut h = x.clone();
        for layer in &self.layers {
            let mut z = layer.affine.predict(&h)?;
            if let Some(bn) = &layer.bn {
                z = bn.predict(&z)?;
            }
            h = relu(&z);
        }
        self.head.predict(&h)
    }

    fn backward(&mut self, dlogits: &Matrix<T>) -> Result<(Matrix<T>, Vec<Matrix<T>>)> {
        let head = self.head.backward(dlogits)?;
        let mut dh = head.dx;
        // Collected back to front, reversed at the end.
        let mut grads = vec![head.dbias, head.dweight];
        for layer in self.layers.iter_mut().rev() {
            let z = layer.pre_activation.take().ok_or(Error::NoForwardCache)?;
            let mut dz = relu_backward(&z, &dh)?;
            if let Some(bn) = &mut layer.bn {
                let g = bn.backward(&dz)?;
                grads.push(g.dbeta);
                grads.push(g.dgamma);
                dz = g.dx;
            }
            let g = layer.affine.backward(&dz)?;
            grads.push(g.dbias);
            grads.push(g.dweight);
            dh = g.dx;
        }
        grads.reverse();
        Ok((dh, grads))
    }

    fn params(&self) -> Vec<&Matrix<T>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.affine.weight);
            out.push(&l.affine.bias);
            if let Some(bn) = &l.bn {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
        }
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.affine.weight);
            out.push(&mut l.affine.bias);
            if let Some(bn) = &mut l.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }
}
