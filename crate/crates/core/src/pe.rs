//! Space-time-frequency positional encoding: three absolute sin/cos
//! encodings, one per axis, concatenated along the feature dimension.

use crate::num::Real;

/// Feature split `D = D_t + D_f + D_s` with `D_t = D_f = ⌊D/3⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeSplit {
    pub d_t: usize,
    pub d_f: usize,
    pub d_s: usize,
    pub d_total: usize,
}

impl PeSplit {
    pub fn new(d_total: usize) -> Self {
        let third = d_total / 3;
        PeSplit {
            d_t: third,
            d_f: third,
            d_s: d_total - 2 * third,
            d_total,
        }
    }
}

/// `out[2j] = sin(pos/10000^(2j/dim))`, `out[2j+1] = cos(…)`. An odd `dim`
/// leaves a final unpaired slot holding the sine term.
pub fn sincos_1d(pos: usize, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    fill_sincos(pos, &mut out);
    out
}

fn fill_sincos(pos: usize, out: &mut [f64]) {
    let dim = out.len() as f64;
    for (slot, v) in out.iter_mut().enumerate() {
        let j = slot / 2;
        let angle = pos as f64 / 10000f64.powf(2.0 * j as f64 / dim);
        *v = if slot % 2 == 0 { angle.sin() } else { angle.cos() };
    }
}

/// One row per coordinate triple, `L × d_total` row-major.
pub fn build_stf_pe<T: Real>(coords: &[[usize; 3]], d_total: usize) -> Vec<T> {
    let split = PeSplit::new(d_total);
    let mut out = Vec::with_capacity(coords.len() * d_total);
    let mut row = vec![0.0f64; d_total];
    for &[pt, pf, ps] in coords {
        let (t_seg, rest) = row.split_at_mut(split.d_t);
        let (f_seg, s_seg) = rest.split_at_mut(split.d_f);
        fill_sincos(pt, t_seg);
        fill_sincos(pf, f_seg);
        fill_sincos(ps, s_seg);
        out.extend(row.iter().map(|&v| T::lit(v)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn origin_pattern() {
        assert_eq!(sincos_1d(0, 4), vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn pos_one_dim_two() {
        let v = sincos_1d(1, 2);
        assert!((v[0] - 0.841_470_984_807_896_5).abs() < 1e-15);
        assert!((v[1] - 0.540_302_305_868_139_8).abs() < 1e-15);
    }

    #[test]
    fn odd_dim_last_slot_is_sine() {
        let v = sincos_1d(5, 5);
        let j = 2.0;
        assert_eq!(v[4], (5.0 / 10000f64.powf(2.0 * j / 5.0)).sin());
    }

    #[test]
    fn split_for_64() {
        let s = PeSplit::new(64);
        assert_eq!((s.d_t, s.d_f, s.d_s), (21, 21, 22));
        assert_eq!(s.d_t + s.d_f + s.d_s, 64);
    }

    #[test]
    fn origin_row_is_sin_zero_cos_one() {
        let row = build_stf_pe::<f64>(&[[0, 0, 0]], 64);
        for seg in [&row[..21], &row[21..42], &row[42..]] {
            for (i, v) in seg.iter().enumerate() {
                assert_eq!(*v, if i % 2 == 0 { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn axis_separation() {
        let base = build_stf_pe::<f64>(&[[3, 4, 5]], 48);
        let t = build_stf_pe::<f64>(&[[7, 4, 5]], 48);
        let s = build_stf_pe::<f64>(&[[3, 4, 6]], 48);
        assert_ne!(base[..16], t[..16]);
        assert_eq!(base[16..], t[16..]);
        assert_eq!(base[..32], s[..32]);
        assert_ne!(base[32..], s[32..]);
    }

    proptest! {
        #[test]
        fn entries_bounded(pos in 0usize..100_000, dim in 1usize..200) {
            prop_assert!(sincos_1d(pos, dim).iter().all(|v| (-1.0..=1.0).contains(v)));
        }

        #[test]
        fn rows_depend_only_on_coords(c in prop::array::uniform3(0usize..64), extra in prop::collection::vec(prop::array::uniform3(0usize..64), 0..8)) {
            let mut coords = extra.clone();
            coords.push(c);
            let full = build_stf_pe::<f64>(&coords, 30);
            let alone = build_stf_pe::<f64>(&[c], 30);
            prop_assert_eq!(&full[full.len() - 30..], &alone[..]);
        }
    }
}
