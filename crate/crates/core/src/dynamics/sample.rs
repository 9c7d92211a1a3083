//! Initial conditions drawn from the Liouville measure.

use core::f64::consts::TAU;

use crate::rng::Stream;

use super::{LineElement, Table};
use crate::geometry::Containment;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledStart {
    pub state: LineElement,
    /// Rejected `(x, y)` proposals.
    pub rejections: u32,
}

/// Uniform `(x, y)` under the profile on `x < x_cutoff` (by rejection) and
/// uniform `θ`. For a rectangle `x_cutoff` is ignored.
pub fn sample_initial(table: &Table, x_cutoff: f64, rng: &mut Stream) -> SampledStart {
    let mut rejections = 0;
    loop {
        let (x, y) = match table {
            Table::Cusp(d) => {
                let hi = d.truncation().map_or(x_cutoff, |l| l.min(x_cutoff));
                (rng.uniform_in(0.0, hi), rng.uniform())
            }
            Table::Rectangle(r) => (rng.uniform_in(0.0, r.width), rng.uniform_in(0.0, r.height)),
        };
        if table.contains([x, y]) == Containment::Interior {
            let theta = rng.uniform_in(0.0, TAU);
            return SampledStart { state: LineElement::new(x, y, theta), rejections };
        }
        rejections += 1;
    }
}
