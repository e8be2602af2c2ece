//! Flat parameter storage with named tensor views.

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::VOCAB_SIZE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn mat<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &p[self.range()]).expect("layout")
    }

    pub fn mat_mut<'a>(&self, p: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut p[self.range()]).expect("layout")
    }

    pub fn vec<'a>(&self, p: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&p[self.range()])
    }

    pub fn vec_mut<'a>(&self, p: &'a mut [f64]) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(&mut p[self.range()])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerTensors {
    pub ln1_g: Tensor,
    pub ln1_b: Tensor,
    pub w_qkv: Tensor,
    pub b_qkv: Tensor,
    pub w_o: Tensor,
    pub b_o: Tensor,
    pub ln2_g: Tensor,
    pub ln2_b: Tensor,
    pub w_fc: Tensor,
    pub b_fc: Tensor,
    pub w_proj: Tensor,
    pub b_proj: Tensor,
}

/// Name, shape and offset of one tensor; serialized into checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: [usize; 2],
    pub offset: usize,
}

#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub wte: Tensor,
    pub wpe: Tensor,
    pub layers: Vec<LayerTensors>,
    pub lnf_g: Tensor,
    pub lnf_b: Tensor,
    pub w_out: Tensor,
    pub b_out: Tensor,
    pub specs: Vec<TensorSpec>,
    pub total: usize,
}

struct Builder {
    offset: usize,
    specs: Vec<TensorSpec>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize) -> Tensor {
        let t = Tensor { offset: self.offset, rows, cols };
        self.specs.push(TensorSpec { name, shape: [rows, cols], offset: self.offset });
        self.offset += rows * cols;
        t
    }
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let d = cfg.embed_dim;
        let f = cfg.ff_dim;
        let mut b = Builder { offset: 0, specs: Vec::new() };
        let wte = b.add("wte".into(), VOCAB_SIZE, d);
        let wpe = b.add("wpe".into(), cfg.window, d);
        let layers = (0..cfg.layers)
            .map(|l| LayerTensors {
                ln1_g: b.add(format!("layer{l}.ln1_g"), 1, d),
                ln1_b: b.add(format!("layer{l}.ln1_b"), 1, d),
                w_qkv: b.add(format!("layer{l}.w_qkv"), d, 3 * d),
                b_qkv: b.add(format!("layer{l}.b_qkv"), 1, 3 * d),
                w_o: b.add(format!("layer{l}.w_o"), d, d),
                b_o: b.add(format!("layer{l}.b_o"), 1, d),
                ln2_g: b.add(format!("layer{l}.ln2_g"), 1, d),
                ln2_b: b.add(format!("layer{l}.ln2_b"), 1, d),
                w_fc: b.add(format!("layer{l}.w_fc"), d, f),
                b_fc: b.add(format!("layer{l}.b_fc"), 1, f),
                w_proj: b.add(format!("layer{l}.w_proj"), f, d),
                b_proj: b.add(format!("layer{l}.b_proj"), 1, d),
            })
            .collect();
        let lnf_g = b.add("lnf_g".into(), 1, d);
        let lnf_b = b.add("lnf_b".into(), 1, d);
        let w_out = b.add("w_out".into(), d, VOCAB_SIZE);
        let b_out = b.add("b_out".into(), 1, VOCAB_SIZE);
        ParamLayout { wte, wpe, layers, lnf_g, lnf_b, w_out, b_out, total: b.offset, specs: b.specs }
    }

    pub fn find(&self, name: &str) -> Option<Tensor> {
        self.specs.iter().find(|s| s.name == name).map(|s| Tensor {
            offset: s.offset,
            rows: s.shape[0],
            cols: s.shape[1],
        })
    }
}
