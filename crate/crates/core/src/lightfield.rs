use std::collections::HashSet;

use lfdepth_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::image::Image;

/// A `U x V` grid of sub-aperture images stored as `(U, V, X, Y, C)`.
///
/// View `(u, v)` sees a scene point of the center view shifted by
/// `d * (u_c - u)` along x and `d * (v_c - v)` along y.
#[derive(Debug, Clone, PartialEq)]
pub struct LightField {
    views: Tensor,
}

impl LightField {
    /// Fails unless the grid is odd-sized and every intensity lies in `[0, 1]`.
    pub fn new(views: Tensor) -> Result<Self> {
        if views.rank() != 5 {
            return Err(invalid("light field", format!("expected (U, V, X, Y, C), got {:?}", views.shape())));
        }
        let s = views.shape();
        if s[0] % 2 == 0 || s[1] % 2 == 0 {
            return Err(invalid("light field", format!("angular grid {}x{} has no central view", s[0], s[1])));
        }
        if s.iter().any(|&n| n == 0) {
            return Err(invalid("light field", format!("empty axis in {s:?}")));
        }
        if !views.is_finite() {
            return Err(Error::NonFinite("light field"));
        }
        if views.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("light field", "intensities must lie in [0, 1]"));
        }
        Ok(Self { views })
    }

    /// Assembles views given in row-major `(u, v)` order.
    pub fn from_views(nu: usize, nv: usize, views: &[Image]) -> Result<Self> {
        if views.len() != nu * nv || views.is_empty() {
            return Err(invalid("light field", format!("expected {} views, got {}", nu * nv, views.len())));
        }
        for v in &views[1..] {
            views[0].check_same_shape(v, "light field assembly")?;
        }
        let (nx, ny, nc) = (views[0].nx(), views[0].ny(), views[0].channels());
        let mut data = Vec::with_capacity(nu * nv * nx * ny * nc);
        for v in views {
            data.extend_from_slice(v.tensor().data());
        }
        Self::new(Tensor::new(vec![nu, nv, nx, ny, nc], data)?)
    }

    pub fn angular_size(&self) -> (usize, usize) {
        (self.views.shape()[0], self.views.shape()[1])
    }

    pub fn spatial_size(&self) -> (usize, usize) {
        (self.views.shape()[2], self.views.shape()[3])
    }

    pub fn channels(&self) -> usize {
        self.views.shape()[4]
    }

    pub fn center(&self) -> (usize, usize) {
        let (nu, nv) = self.angular_size();
        ((nu - 1) / 2, (nv - 1) / 2)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.views
    }

    /// Copy of the sub-aperture image at `(u, v)`.
    pub fn view(&self, u: usize, v: usize) -> Result<Image> {
        let (nu, nv) = self.angular_size();
        if u >= nu || v >= nv {
            return Err(Error::ViewOutOfRange { u, v, nu, nv });
        }
        let (nx, ny) = self.spatial_size();
        let block = nx * ny * self.channels();
        let start = (u * nv + v) * block;
        let data = self.views.data()[start..start + block].to_vec();
        Image::new(Tensor::new(vec![nx, ny, self.channels()], data)?)
    }

    pub fn center_view(&self) -> Image {
        let (uc, vc) = self.center();
        self.view(uc, vc).expect("center is in range")
    }

    /// Spatial crop applied to every view.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        let (nu, nv) = self.angular_size();
        let mut views = Vec::with_capacity(nu * nv);
        for u in 0..nu {
            for v in 0..nv {
                views.push(self.view(u, v)?.crop(x0, y0, w, h)?);
            }
        }
        Self::from_views(nu, nv, &views)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Row,
    Column,
}

/// Three views symmetric about the center, along one angular axis.
///
/// For rows `left = (u_c - b, v_c)`; for columns `left = (u_c, v_c - b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ViewCombination {
    pub left: (usize, usize),
    pub center: (usize, usize),
    pub right: (usize, usize),
    pub orientation: Orientation,
    pub baseline: usize,
}

impl ViewCombination {
    pub fn new(center: (usize, usize), orientation: Orientation, baseline: usize) -> Result<Self> {
        let (uc, vc) = center;
        if baseline == 0 {
            return Err(invalid("view combination", "baseline must be at least 1"));
        }
        let reach = match orientation {
            Orientation::Row => uc,
            Orientation::Column => vc,
        };
        if baseline > reach {
            return Err(invalid(
                "view combination",
                format!("baseline {baseline} exceeds angular half-extent {reach}"),
            ));
        }
        let (left, right) = match orientation {
            Orientation::Row => ((uc - baseline, vc), (uc + baseline, vc)),
            Orientation::Column => ((uc, vc - baseline), (uc, vc + baseline)),
        };
        Ok(Self {
            left,
            center,
            right,
            orientation,
            baseline,
        })
    }

    pub fn views(&self) -> [(usize, usize); 3] {
        [self.left, self.center, self.right]
    }

    /// `[left, center, right]` images from `lf`.
    pub fn extract(&self, lf: &LightField) -> Result<[Image; 3]> {
        Ok([
            lf.view(self.left.0, self.left.1)?,
            lf.view(self.center.0, self.center.1)?,
            lf.view(self.right.0, self.right.1)?,
        ])
    }
}

impl std::fmt::Display for ViewCombination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let o = match self.orientation {
            Orientation::Row => "row",
            Orientation::Column => "col",
        };
        write!(f, "{o}{}", self.baseline)
    }
}

/// One row and one column combination per offset, in offset order.
pub fn enumerate_combinations(lf: &LightField, offsets: &[usize]) -> Result<Vec<ViewCombination>> {
    let (nu, nv) = lf.angular_size();
    let limit = (nu.min(nv) - 1) / 2;
    let mut out = Vec::with_capacity(2 * offsets.len());
    for &b in offsets {
        if b == 0 || b > limit {
            return Err(invalid(
                "offsets",
                format!("offset {b} outside 1..={limit} for a {nu}x{nv} light field"),
            ));
        }
        out.push(ViewCombination::new(lf.center(), Orientation::Row, b)?);
        out.push(ViewCombination::new(lf.center(), Orientation::Column, b)?);
    }
    Ok(out)
}

/// Auxiliary views used to score candidate maps during fusion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuxiliaryViews {
    /// The diagonal views `(u_c +- i, v_c +- i)`.
    Diag12,
    /// The diagonal views plus the four views adjacent to the center.
    Default16,
    Explicit(Vec<(usize, usize)>),
}

impl Default for AuxiliaryViews {
    fn default() -> Self {
        Self::Default16
    }
}

pub fn auxiliary_views(lf: &LightField, preset: &AuxiliaryViews) -> Result<Vec<(usize, usize)>> {
    let (nu, nv) = lf.angular_size();
    let (uc, vc) = lf.center();
    let diagonal = || {
        let mut out = Vec::new();
        for i in 1..=uc.min(vc) {
            out.extend([(uc - i, vc - i), (uc - i, vc + i), (uc + i, vc - i), (uc + i, vc + i)]);
        }
        out
    };
    match preset {
        AuxiliaryViews::Diag12 => Ok(diagonal()),
        AuxiliaryViews::Default16 => {
            let mut out = diagonal();
            if uc >= 1 {
                out.extend([(uc - 1, vc), (uc + 1, vc)]);
            }
            if vc >= 1 {
                out.extend([(uc, vc - 1), (uc, vc + 1)]);
            }
            Ok(out)
        }
        AuxiliaryViews::Explicit(list) => {
            let mut seen = HashSet::new();
            for &(u, v) in list {
                if u >= nu || v >= nv {
                    return Err(Error::ViewOutOfRange { u, v, nu, nv });
                }
                if (u, v) == (uc, vc) {
                    return Err(invalid("auxiliary views", "the center view cannot be auxiliary"));
                }
                if !seen.insert((u, v)) {
                    return Err(invalid("auxiliary views", format!("duplicate view ({u}, {v})")));
                }
            }
            Ok(list.clone())
        }
    }
}
