//! Forward and backward kernels for the supported layer kinds.

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// No padding; output shrinks by `kernel - 1`.
    Valid,
    /// Zero padding of `(kernel - 1) / 2`; odd kernels keep the spatial size.
    Same,
}

impl Padding {
    pub(crate) fn amount(self, kernel: usize) -> usize {
        match self {
            Padding::Valid => 0,
            Padding::Same => (kernel - 1) / 2,
        }
    }
}

/// One layer descriptor of a [`super::ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Linear {
        inputs: usize,
        outputs: usize,
        bias: bool,
    },
    /// Stride-1 2-D convolution over `(channels, height, width)` inputs.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: Padding,
        bias: bool,
    },
    Relu,
    /// Non-overlapping max-pool with window and stride `size`.
    MaxPool2d {
        size: usize,
    },
    Flatten,
}

impl LayerSpec {
    pub fn is_parameterized(&self) -> bool {
        matches!(self, LayerSpec::Linear { .. } | LayerSpec::Conv2d { .. })
    }
}

pub(crate) fn linear_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Tensor {
    let (n, inputs) = (x.shape()[0], x.shape()[1]);
    let outputs = w.shape()[0];
    let (xd, wd) = (x.data(), w.data());
    let mut y = vec![0.0; n * outputs];
    for s in 0..n {
        let xrow = &xd[s * inputs..(s + 1) * inputs];
        for o in 0..outputs {
            let wrow = &wd[o * inputs..(o + 1) * inputs];
            let mut acc = b.map_or(0.0, |b| b.data()[o]);
            for i in 0..inputs {
                acc += wrow[i] * xrow[i];
            }
            y[s * outputs + o] = acc;
        }
    }
    Tensor::from_raw(vec![n, outputs], y)
}

/// Returns `(dx, dw, db)`.
pub(crate) fn linear_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    with_bias: bool,
) -> (Tensor, Tensor, Option<Tensor>) {
    let (n, inputs) = (x.shape()[0], x.shape()[1]);
    let outputs = w.shape()[0];
    let (xd, wd, dyd) = (x.data(), w.data(), dy.data());
    let mut dx = vec![0.0; n * inputs];
    let mut dw = vec![0.0; outputs * inputs];
    let mut db = vec![0.0; outputs];
    for s in 0..n {
        let xrow = &xd[s * inputs..(s + 1) * inputs];
        for o in 0..outputs {
            let g = dyd[s * outputs + o];
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let wrow = &wd[o * inputs..(o + 1) * inputs];
            let dwrow = &mut dw[o * inputs..(o + 1) * inputs];
            let dxrow = &mut dx[s * inputs..(s + 1) * inputs];
            for i in 0..inputs {
                dwrow[i] += g * xrow[i];
                dxrow[i] += g * wrow[i];
            }
        }
    }
    (
        Tensor::from_raw(vec![n, inputs], dx),
        Tensor::from_raw(w.shape().to_vec(), dw),
        with_bias.then(|| Tensor::from_raw(vec![outputs], db)),
    )
}

pub(crate) fn conv_output_size(size: usize, kernel: usize, padding: Padding) -> Option<usize> {
    (size + 2 * padding.amount(kernel))
        .checked_sub(kernel)
        .map(|s| s + 1)
}

pub(crate) fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    padding: Padding,
) -> Tensor {
    let [n, c, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let (o, k) = (w.shape()[0], w.shape()[2]);
    let p = padding.amount(k) as isize;
    let oh = conv_output_size(h, k, padding).unwrap();
    let ow = conv_output_size(wd, k, padding).unwrap();
    let (xv, wv) = (x.data(), w.data());
    let mut y = vec![0.0; n * o * oh * ow];
    for s in 0..n {
        for oc in 0..o {
            let bias = b.map_or(0.0, |b| b.data()[oc]);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias;
                    for ic in 0..c {
                        for ky in 0..k {
                            let iy = oy as isize + ky as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = ox as isize + kx as isize - p;
                                if ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                let xi = ((s * c + ic) * h + iy as usize) * wd + ix as usize;
                                let wi = ((oc * c + ic) * k + ky) * k + kx;
                                acc += wv[wi] * xv[xi];
                            }
                        }
                    }
                    y[((s * o + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Tensor::from_raw(vec![n, o, oh, ow], y)
}

pub(crate) fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    padding: Padding,
    with_bias: bool,
) -> (Tensor, Tensor, Option<Tensor>) {
    let [n, c, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let (o, k) = (w.shape()[0], w.shape()[2]);
    let (oh, ow) = (dy.shape()[2], dy.shape()[3]);
    let p = padding.amount(k) as isize;
    let (xv, wv, dyv) = (x.data(), w.data(), dy.data());
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; o];
    for s in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = dyv[((s * o + oc) * oh + oy) * ow + ox];
                    if g == 0.0 {
                        continue;
                    }
                    db[oc] += g;
                    for ic in 0..c {
                        for ky in 0..k {
                            let iy = oy as isize + ky as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = ox as isize + kx as isize - p;
                                if ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                let xi = ((s * c + ic) * h + iy as usize) * wd + ix as usize;
                                let wi = ((oc * c + ic) * k + ky) * k + kx;
                                dw[wi] += g * xv[xi];
                                dx[xi] += g * wv[wi];
                            }
                        }
                    }
                }
            }
        }
    }
    (
        Tensor::from_raw(x.shape().to_vec(), dx),
        Tensor::from_raw(w.shape().to_vec(), dw),
        with_bias.then(|| Tensor::from_raw(vec![o], db)),
    )
}

pub(crate) fn relu_forward(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_raw(x.shape().to_vec(), data)
}

pub(crate) fn relu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_raw(x.shape().to_vec(), data)
}

/// Returns the pooled tensor and, per output element, the flat input index
/// that won the max.
pub(crate) fn maxpool_forward(x: &Tensor, size: usize) -> (Tensor, Vec<usize>) {
    let [n, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let (oh, ow) = (h / size, w / size);
    let xv = x.data();
    let mut y = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + (oy * size) * w + ox * size;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = base + (oy * size + dy) * w + ox * size + dx;
                        if xv[i] > xv[best] {
                            best = i;
                        }
                    }
                }
                y.push(xv[best]);
                arg.push(best);
            }
        }
    }
    (Tensor::from_raw(vec![n, c, oh, ow], y), arg)
}

pub(crate) fn maxpool_backward(x: &Tensor, argmax: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = vec![0.0; x.len()];
    for (&i, &g) in argmax.iter().zip(dy.data()) {
        dx[i] += g;
    }
    Tensor::from_raw(x.shape().to_vec(), dx)
}
