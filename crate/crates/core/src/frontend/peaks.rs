use super::srp::SteeredPowerMap;

/// Angular radius for non-maximum suppression, degrees.
pub const DEFAULT_SUPPRESSION_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub power: f64,
}

/// Greedy top-`k` selection with non-maximum suppression within
/// `suppression_deg`. Output is in descending power; equal powers are taken
/// in ascending grid index.
pub fn pick_peaks_with(map: &SteeredPowerMap, k: usize, suppression_deg: f64) -> Vec<Peak> {
    let k = k.max(1);
    let mut order: Vec<usize> = (0..map.powers.len()).collect();
    order.sort_by(|&a, &b| map.powers[b].total_cmp(&map.powers[a]).then(a.cmp(&b)));

    let cos_radius = suppression_deg.to_radians().cos();
    let pts = map.grid.points();
    let mut out: Vec<Peak> = Vec::with_capacity(k);
    for i in order {
        if out.len() == k {
            break;
        }
        let v = pts[i].as_vector();
        if out
            .iter()
            .any(|p| pts[p.index].as_vector().dot(v) >= cos_radius)
        {
            continue;
        }
        out.push(Peak {
            index: i,
            power: map.powers[i],
        });
    }
    out
}

/// Up to `k` peaks with the default 10 degree suppression radius.
pub fn pick_peaks(map: &SteeredPowerMap, k: usize) -> Vec<Peak> {
    pick_peaks_with(map, k, DEFAULT_SUPPRESSION_DEG)
}
