use serde::{Deserialize, Serialize};

use crate::captcha::{Charset, CharsetKind};
use crate::error::{Error, Result};
use crate::preprocess::{INPUT_HEIGHT, INPUT_WIDTH};

/// Output-head encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMethod {
    /// One `D*L` wide sigmoid layer encoding all positions jointly.
    Sigmoid,
    /// `L` independent `D`-way softmax layers, one per position.
    Softmax,
}

impl HeadMethod {
    pub fn name(self) -> &'static str {
        match self {
            HeadMethod::Sigmoid => "sigmoid",
            HeadMethod::Softmax => "softmax",
        }
    }
}

pub const MAX_LENGTH: usize = 8;

/// Network hyper-structure. Parameter shapes are derived from it alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub conv_widths: [usize; 3],
    pub kernel: usize,
    pub dense: usize,
    pub dropout: f64,
    /// Characters per CAPTCHA (`L`).
    pub length: usize,
    /// Alphabet size (`D`).
    pub classes: usize,
    pub head: HeadMethod,
    /// `None` only for synthetic test configurations.
    pub charset: Option<CharsetKind>,
}

impl ModelConfig {
    /// The `deep-captcha-v1` preset: 25x67 input, conv 32/48/64 with 5x5
    /// kernels, dense 512, dropout 0.3.
    pub fn deep_captcha_v1(charset: CharsetKind, length: usize, head: HeadMethod) -> Self {
        Self {
            input_height: INPUT_HEIGHT,
            input_width: INPUT_WIDTH,
            conv_widths: [32, 48, 64],
            kernel: 5,
            dense: 512,
            dropout: 0.3,
            length,
            classes: Charset::new(charset).len(),
            head,
            charset: Some(charset),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("model config: {m}")));
        if !(1..=MAX_LENGTH).contains(&self.length) {
            return bad(format!("length {} outside [1, {MAX_LENGTH}]", self.length));
        }
        if self.classes < 2 || self.classes > 255 {
            return bad(format!("classes {} outside [2, 255]", self.classes));
        }
        if let Some(kind) = self.charset {
            let d = Charset::new(kind).len();
            if d != self.classes {
                return bad(format!("{} charset has {d} symbols, config says {}", kind.name(), self.classes));
            }
        }
        if self.conv_widths.contains(&0) || self.dense == 0 {
            return bad("layer widths must be >= 1".into());
        }
        if self.kernel.is_multiple_of(2) {
            return bad(format!("kernel {} must be odd", self.kernel));
        }
        if self.input_height < 8 || self.input_width < 8 {
            return bad(format!(
                "input {}x{} too small for three 2x2 poolings",
                self.input_height, self.input_width
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// `(channels, height, width)` after each conv + pool stage.
    pub fn stage_shapes(&self) -> [[usize; 3]; 3] {
        let (mut h, mut w) = (self.input_height, self.input_width);
        let mut out = [[0; 3]; 3];
        for (slot, &c) in out.iter_mut().zip(&self.conv_widths) {
            h /= 2;
            w /= 2;
            *slot = [c, h, w];
        }
        out
    }

    pub fn flatten_width(&self) -> usize {
        let [c, h, w] = self.stage_shapes()[2];
        c * h * w
    }

    pub fn output_width(&self) -> usize {
        self.length * self.classes
    }

    /// Shapes of every parameter tensor in checkpoint order: conv kernels and
    /// biases, dense weights and bias, then the heads.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let k = self.kernel;
        let mut shapes = Vec::new();
        let mut in_c = 1;
        for &c in &self.conv_widths {
            shapes.push(vec![c, in_c, k, k]);
            shapes.push(vec![c]);
            in_c = c;
        }
        shapes.push(vec![self.flatten_width(), self.dense]);
        shapes.push(vec![self.dense]);
        match self.head {
            HeadMethod::Softmax => {
                for _ in 0..self.length {
                    shapes.push(vec![self.dense, self.classes]);
                    shapes.push(vec![self.classes]);
                }
            }
            HeadMethod::Sigmoid => {
                shapes.push(vec![self.dense, self.output_width()]);
                shapes.push(vec![self.output_width()]);
            }
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    /// Fan-in of each parameter tensor (used for initialization).
    pub(crate) fn fan_ins(&self) -> Vec<usize> {
        self.param_shapes()
            .iter()
            .map(|s| match s.len() {
                4 => s[1] * s[2] * s[3],
                2 => s[0],
                _ => 0,
            })
            .collect()
    }
}
