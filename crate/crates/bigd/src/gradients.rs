//! Per-pixel channel maps (intensity, Sobel gradients, absolute gradients)
//! and summed-area tables over them for O(1) block means.

use crate::error::{Error, Result};
use crate::imageio::GrayImage;

/// The five channels a block feature is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Intensity,
    GradX,
    GradY,
    AbsGradX,
    AbsGradY,
}

pub const CHANNELS: [Channel; 5] = [
    Channel::Intensity,
    Channel::GradX,
    Channel::GradY,
    Channel::AbsGradX,
    Channel::AbsGradY,
];

/// Whole-image channel maps, all with the source image's dimensions.
#[derive(Debug, Clone)]
pub struct ChannelMaps {
    width: usize,
    height: usize,
    maps: [Vec<f64>; 5],
}

impl ChannelMaps {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn map(&self, channel: Channel) -> &[f64] {
        &self.maps[channel_index(channel)]
    }

    pub fn at(&self, channel: Channel, row: usize, col: usize) -> f64 {
        self.map(channel)[row * self.width + col]
    }
}

fn channel_index(c: Channel) -> usize {
    match c {
        Channel::Intensity => 0,
        Channel::GradX => 1,
        Channel::GradY => 2,
        Channel::AbsGradX => 3,
        Channel::AbsGradY => 4,
    }
}

/// Computes the five channel maps.
///
/// The horizontal gradient uses the kernel `[[-1,0,1],[-2,0,2],[-1,0,1]]`
/// (correlation, not flipped convolution), the vertical gradient its
/// transpose. Borders replicate the edge pixel. Raw kernel sums are kept;
/// no 1/8 normalization is applied.
pub fn sobel(img: &GrayImage) -> ChannelMaps {
    let (w, h) = (img.width(), img.height());
    let mut dx = vec![0.0; w * h];
    let mut dy = vec![0.0; w * h];
    let mut adx = vec![0.0; w * h];
    let mut ady = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let (ri, ci) = (r as isize, c as isize);
            let p = |dr: isize, dc: isize| img.at_clamped(ri + dr, ci + dc);
            let gx = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let gy = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let i = r * w + c;
            dx[i] = gx;
            dy[i] = gy;
            adx[i] = gx.abs();
            ady[i] = gy.abs();
        }
    }
    ChannelMaps {
        width: w,
        height: h,
        maps: [img.data().to_vec(), dx, dy, adx, ady],
    }
}

/// Summed-area tables over each channel, each `(height+1) x (width+1)`.
#[derive(Debug, Clone)]
pub struct IntegralStack {
    width: usize,
    height: usize,
    tables: [Vec<f64>; 5],
}

/// Builds the five summed-area tables in double precision.
pub fn integrate(maps: &ChannelMaps) -> IntegralStack {
    let (w, h) = (maps.width(), maps.height());
    let tables = std::array::from_fn(|k| {
        let map = &maps.maps[k];
        let stride = w + 1;
        let mut table = vec![0.0; stride * (h + 1)];
        for r in 0..h {
            let mut row_sum = 0.0;
            for c in 0..w {
                row_sum += map[r * w + c];
                table[(r + 1) * stride + c + 1] = table[r * stride + c + 1] + row_sum;
            }
        }
        table
    });
    IntegralStack {
        width: w,
        height: h,
        tables,
    }
}

impl IntegralStack {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Sum of a channel over the rectangle with the given top-left corner.
    pub fn rect_sum(
        &self,
        channel: Channel,
        top_left: (usize, usize),
        rows: usize,
        cols: usize,
    ) -> Result<f64> {
        let (r0, c0) = top_left;
        let (r1, c1) = (r0 + rows, c0 + cols);
        if rows == 0 || cols == 0 || r1 > self.height || c1 > self.width {
            return Err(Error::InvalidArgument(format!(
                "rectangle {rows}x{cols} at ({r0}, {c0}) outside {}x{} image",
                self.height, self.width
            )));
        }
        let t = &self.tables[channel_index(channel)];
        let stride = self.width + 1;
        Ok(t[r1 * stride + c1] - t[r0 * stride + c1] - t[r1 * stride + c0] + t[r0 * stride + c0])
    }

    /// Mean of a channel over an `s x s` block with the given top-left corner.
    pub fn block_mean(&self, channel: Channel, top_left: (usize, usize), s: usize) -> Result<f64> {
        let sum = self.rect_sum(channel, top_left, s, s)?;
        Ok(sum / (s * s) as f64)
    }
}
