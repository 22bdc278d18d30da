use crate::batchnorm::BatchNorm2d;
use crate::conv::Conv2d;
use crate::convlstm::ConvLstm;
use crate::error::Result;
use crate::linear::Linear;
use crate::param::Param;
use crate::pool::AvgPool2d;
use crate::spec::LayerSpec;
use crate::tensor::Tensor;
use crate::Mode;

#[derive(Clone, Debug)]
pub enum Layer {
    Conv2d(Conv2d),
    BatchNorm(BatchNorm2d),
    AvgPool(AvgPool2d),
    ConvLstm(ConvLstm),
    Linear(Linear),
}

impl Layer {
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::AvgPool(l) => l.forward(x),
            Layer::ConvLstm(l) => l.forward(x),
            Layer::Linear(l) => l.forward(x),
        }
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(l) => l.backward(grad),
            Layer::BatchNorm(l) => l.backward(grad),
            Layer::AvgPool(l) => l.backward(grad),
            Layer::ConvLstm(l) => l.backward(grad),
            Layer::Linear(l) => l.backward(grad),
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(l) => l.spec(),
            Layer::BatchNorm(l) => l.spec(),
            Layer::AvgPool(l) => l.spec(),
            Layer::ConvLstm(l) => l.spec(),
            Layer::Linear(l) => l.spec(),
        }
    }

    pub fn params(&self) -> Vec<(&'static str, &Param)> {
        match self {
            Layer::Conv2d(l) => l.params(),
            Layer::BatchNorm(l) => l.params(),
            Layer::AvgPool(_) => Vec::new(),
            Layer::ConvLstm(l) => l.params(),
            Layer::Linear(l) => l.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        match self {
            Layer::Conv2d(l) => l.params_mut(),
            Layer::BatchNorm(l) => l.params_mut(),
            Layer::AvgPool(_) => Vec::new(),
            Layer::ConvLstm(l) => l.params_mut(),
            Layer::Linear(l) => l.params_mut(),
        }
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn buffers(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            Layer::BatchNorm(l) => vec![("running_mean", &l.running_mean), ("running_var", &l.running_var)],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        match self {
            Layer::BatchNorm(l) => vec![("running_mean", &mut l.running_mean), ("running_var", &mut l.running_var)],
            _ => Vec::new(),
        }
    }

    /// Parameter values followed by buffers.
    pub fn state(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out: Vec<_> = self.params().into_iter().map(|(n, p)| (n, &p.value)).collect();
        out.extend(self.buffers());
        out
    }

    pub fn state_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        match self {
            Layer::BatchNorm(l) => vec![
                ("gamma", &mut l.gamma.value),
                ("beta", &mut l.beta.value),
                ("running_mean", &mut l.running_mean),
                ("running_var", &mut l.running_var),
            ],
            other => other.params_mut().into_iter().map(|(n, p)| (n, &mut p.value)).collect(),
        }
    }
}

/// An ordered stack of named layers evaluated front to back.
#[derive(Clone, Debug, Default)]
pub struct Sequential {
    layers: Vec<(String, Layer)>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, layer: Layer) -> Self {
        self.layers.push((name.to_string(), layer));
        self
    }

    pub fn layers(&self) -> &[(String, Layer)] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [(String, Layer)] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|(_, l)| l.spec()).collect()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut cur = x.clone();
        for (_, layer) in &mut self.layers {
            cur = layer.forward(&cur, mode)?;
        }
        Ok(cur)
    }

    /// Backpropagates `grad` (w.r.t. the last output) through every layer,
    /// accumulating parameter gradients, and returns the input gradient.
    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut cur = grad.clone();
        for (_, layer) in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn params(&self) -> Vec<(String, &Param)> {
        self.layers
            .iter()
            .flat_map(|(name, l)| l.params().into_iter().map(move |(p, t)| (format!("{name}.{p}"), t)))
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        self.layers
            .iter_mut()
            .flat_map(|(name, l)| {
                let name = name.clone();
                l.params_mut().into_iter().map(move |(p, t)| (format!("{name}.{p}"), t))
            })
            .collect()
    }

    pub fn buffers(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .flat_map(|(name, l)| l.buffers().into_iter().map(move |(p, t)| (format!("{name}.{p}"), t)))
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers
            .iter_mut()
            .flat_map(|(name, l)| {
                let name = name.clone();
                l.buffers_mut().into_iter().map(move |(p, t)| (format!("{name}.{p}"), t))
            })
            .collect()
    }

    /// Every parameter value and buffer, layer by layer.
    pub fn state(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .flat_map(|(name, l)| l.state().into_iter().map(move |(p, t)| (format!("{name}.{p}"), t)))
            .collect()
    }

    pub fn state_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers
            .iter_mut()
            .flat_map(|(name, l)| {
                let name = name.clone();
                l.state_mut().into_iter().map(move |(p, t)| (format!("{name}.{p}"), t))
            })
            .collect()
    }
}
