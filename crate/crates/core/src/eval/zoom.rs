use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Rect};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ZoomError {
    #[error("tile fraction {0} outside (0, 1]")]
    BadFraction(f64),
    #[error("coarse point ({0}, {1}) outside the image")]
    OutOfImage(i32, i32),
    #[error("empty image")]
    EmptyImage,
}

/// Crop tile in original-image pixels: origin plus size. Covers pixels
/// `x..x+w` by `y..y+h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl CropRect {
    /// Corner form `(x, y, x + w, y + h)`.
    pub fn as_rect(&self) -> Rect {
        Rect::new(self.x as i32, self.y as i32, (self.x + self.w) as i32, (self.y + self.h) as i32)
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.w, self.h)
    }

    pub fn contains(&self, g: Point) -> bool {
        inverse_remap(self, g).is_some()
    }
}

fn axis(center: i32, extent: u32, f: f64) -> (u32, u32) {
    let size = (libm::round(f * f64::from(extent)) as u32).clamp(1, extent);
    let start = i64::from(center) - i64::from(size / 2);
    let start = start.clamp(0, i64::from(extent - size)) as u32;
    (start, size)
}

/// Tile of `round(f*W) x round(f*H)` centered on the coarse point, shifted
/// the least amount needed to fit inside the image.
pub fn crop_rect(image_dims: (u32, u32), coarse: Point, f: f64) -> Result<CropRect, ZoomError> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(ZoomError::BadFraction(f));
    }
    let (w, h) = image_dims;
    if w == 0 || h == 0 {
        return Err(ZoomError::EmptyImage);
    }
    if coarse.x < 0 || coarse.y < 0 || coarse.x as u32 > w || coarse.y as u32 > h {
        return Err(ZoomError::OutOfImage(coarse.x, coarse.y));
    }
    let (x, cw) = axis(coarse.x, w, f);
    let (y, ch) = axis(coarse.y, h, f);
    Ok(CropRect { x, y, w: cw, h: ch })
}

/// Crop-local point to global pixels. Local coordinates are clamped to the
/// tile first.
pub fn remap(crop: &CropRect, local: Point) -> Point {
    let lx = local.x.clamp(0, crop.w as i32 - 1);
    let ly = local.y.clamp(0, crop.h as i32 - 1);
    Point::new(crop.x as i32 + lx, crop.y as i32 + ly)
}

/// Global point to crop-local coordinates, `None` outside the tile.
pub fn inverse_remap(crop: &CropRect, global: Point) -> Option<Point> {
    let lx = i64::from(global.x) - i64::from(crop.x);
    let ly = i64::from(global.y) - i64::from(crop.y);
    (0..i64::from(crop.w)).contains(&lx).then_some(())?;
    (0..i64::from(crop.h)).contains(&ly).then_some(())?;
    Some(Point::new(lx as i32, ly as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_and_clamped() {
        let c = crop_rect((1000, 1000), Point::new(500, 500), 0.25).unwrap();
        assert_eq!(c.as_rect(), Rect::new(375, 375, 625, 625));
        let c = crop_rect((1000, 1000), Point::new(0, 0), 0.25).unwrap();
        assert_eq!(c.as_rect(), Rect::new(0, 0, 250, 250));
        let c = crop_rect((1000, 1000), Point::new(1000, 990), 0.25).unwrap();
        assert_eq!(c.as_rect(), Rect::new(750, 750, 1000, 1000));
        let c = crop_rect((1920, 1080), Point::new(10, 10), 0.5).unwrap();
        assert_eq!(c.dims(), (960, 540));
        let c = crop_rect((1920, 1080), Point::new(1500, 300), 1.0).unwrap();
        assert_eq!(c, CropRect { x: 0, y: 0, w: 1920, h: 1080 });
        assert!(crop_rect((100, 100), Point::new(5, 5), 0.0).is_err());
        assert!(crop_rect((100, 100), Point::new(5, 5), 1.5).is_err());
        assert!(crop_rect((100, 100), Point::new(101, 5), 0.5).is_err());
    }

    #[test]
    fn remap_examples() {
        let c = CropRect { x: 100, y: 200, w: 50, h: 50 };
        assert_eq!(remap(&c, Point::new(10, 10)), Point::new(110, 210));
        assert_eq!(remap(&c, Point::new(-3, 80)), Point::new(100, 249));
        assert_eq!(inverse_remap(&c, Point::new(110, 210)), Some(Point::new(10, 10)));
        assert_eq!(inverse_remap(&c, Point::new(150, 210)), None);
    }
}
