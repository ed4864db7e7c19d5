use super::config::ModelConfig;

/// Input pixels (full-resolution offsets, inclusive) that can influence an
/// output pixel, relative to the pixel's own position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Span {
    lo: i64,
    hi: i64,
}

impl Span {
    const POINT: Span = Span { lo: 0, hi: 0 };

    fn union(self, o: Span) -> Span {
        Span {
            lo: self.lo.min(o.lo),
            hi: self.hi.max(o.hi),
        }
    }

    /// 3x3 stride-1 convolution at `level`.
    fn conv(self, level: usize) -> Span {
        let s = 1i64 << level;
        Span {
            lo: self.lo - s,
            hi: self.hi + s,
        }
    }

    /// 3x3 stride-2 convolution from `level - 1` to `level`.
    fn down(self, level: usize) -> Span {
        let s = 1i64 << (level - 1);
        Span {
            lo: self.lo - s,
            hi: self.hi + s,
        }
    }

    /// 2x average pooling from `level - 1` to `level`.
    fn pool(self, level: usize) -> Span {
        Span {
            lo: self.lo,
            hi: self.hi + (1i64 << (level - 1)),
        }
    }

    /// Nearest-neighbour 2x upsampling from `level` to `level - 1`.
    fn up(self, level: usize) -> Span {
        Span {
            lo: self.lo - (1i64 << (level - 1)),
            hi: self.hi,
        }
    }
}

/// Receptive-field radius in input pixels of the conv-only generator
/// (attention disabled), covering both shading and geometry inputs.
///
/// Input pixels farther than this (Chebyshev distance) from an output pixel
/// cannot influence it.
pub fn receptive_radius(config: &ModelConfig) -> usize {
    let l = config.levels;
    let mut cond = alloc::vec::Vec::with_capacity(l + 1);
    let mut geo = Span::POINT.conv(0);
    let mut raw = Span::POINT;
    cond.push(geo.union(raw));
    for i in 1..=l {
        geo = geo.down(i);
        raw = raw.pool(i);
        cond.push(geo.union(raw));
    }
    let mut skips = alloc::vec::Vec::with_capacity(l + 1);
    let mut h = Span::POINT.conv(0);
    skips.push(h);
    for i in 1..=l {
        h = h.down(i).conv(i);
        skips.push(h);
    }
    h = h.conv(l).union(cond[l]);
    for i in (0..l).rev() {
        h = h.up(i + 1).conv(i).union(skips[i]).conv(i).union(cond[i]);
    }
    h = h.conv(0);
    (-h.lo).max(h.hi) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_level_by_hand() {
        // enc0 (1) -> down (1) -> conv@1 (2) -> bottleneck@1 (2) -> up (1 on the low side)
        // -> conv@0 (1) -> conv@0 (1) -> out (1): low side 1+1+2+2+1+1+1+1 = 10.
        let cfg = ModelConfig {
            levels: 1,
            ..ModelConfig::default()
        };
        assert_eq!(receptive_radius(&cfg), 10);
    }
}
