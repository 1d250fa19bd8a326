//! Static SVG of sensor trajectories over the source map.

use std::fmt::Write;

use sensoralloc::SensorLayout;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 30.0;
const COLORS: &[&str] = &["#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#ff7f0e"];

pub struct Frame {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Frame {
    /// Smallest frame covering every point, padded so flat extents still render.
    pub fn around<'a>(points: impl IntoIterator<Item = &'a [f64; 2]>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for c in 0..2 {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        for c in 0..2 {
            if !lo[c].is_finite() {
                lo[c] = -1.0;
                hi[c] = 1.0;
            }
            if hi[c] - lo[c] < 1e-9 {
                lo[c] -= 1.0;
                hi[c] += 1.0;
            }
        }
        Self { lo, hi }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        let span = (self.hi[0] - self.lo[0]).max(self.hi[1] - self.lo[1]);
        let scale = (SIZE - 2.0 * MARGIN) / span;
        (MARGIN + (p[0] - self.lo[0]) * scale, SIZE - MARGIN - (p[1] - self.lo[1]) * scale)
    }
}

/// `trajectory[m]` is the layout after `m` steps.
pub fn render(frame: &Frame, sources: &[[f64; 2]], trajectory: &[SensorLayout]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r##"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"##);
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="white"/>"##);
    let (x0, y0) = frame.map(frame.lo);
    let (x1, y1) = frame.map(frame.hi);
    let _ = writeln!(
        s,
        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#999"/>"##,
        x0,
        y1,
        x1 - x0,
        y0 - y1
    );
    for p in sources {
        let (x, y) = frame.map(*p);
        let _ = writeln!(s, r##"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="#d62728"/>"##, x - 4.0, y - 4.0);
    }
    let n = trajectory.first().map_or(0, SensorLayout::len);
    for i in 0..n {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = trajectory
            .iter()
            .filter_map(|l| l.positions.get(i))
            .map(|p| {
                let (x, y) = frame.map(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"##, pts.join(" "));
        if let (Some(first), Some(last)) = (trajectory.first(), trajectory.last()) {
            let (x, y) = frame.map(first.positions[i]);
            let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="none" stroke="{color}"/>"##);
            let (x, y) = frame.map(last.positions[i]);
            let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"##);
        }
    }
    s.push_str("</svg>\n");
    s
}
