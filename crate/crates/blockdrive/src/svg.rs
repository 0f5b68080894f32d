//! SVG export: one path per lane boundary, solid or dashed, plus a short
//! stub across every socket.

use std::fmt::Write;

use blockdrive_core::blocks::LineType;
use blockdrive_core::geometry::{discretize, Aabb, Vec2};
use blockdrive_core::pgmap::RoadNetwork;

const MARGIN: f64 = 5.0;

/// World y points up, SVG y points down. Adding zero turns `-0` into `0`.
fn flip(p: Vec2) -> Vec2 {
    Vec2::new(p.x + 0.0, -p.y + 0.0)
}

fn path_data(points: &[Vec2]) -> String {
    let mut d = String::new();
    for (i, p) in points.iter().map(|&p| flip(p)).enumerate() {
        let cmd = if i == 0 { 'M' } else { 'L' };
        let _ = write!(d, "{cmd}{:.3} {:.3} ", p.x, p.y);
    }
    d.pop();
    d
}

/// The drawn extent in world coordinates.
pub fn bounds(net: &RoadNetwork) -> Aabb {
    let mut b = Aabb::EMPTY;
    for (_, road) in net.roads() {
        for k in 0..=road.lanes {
            for p in discretize(&road.boundary(k)) {
                b.include(p);
            }
        }
    }
    b
}

pub fn export_svg(net: &RoadNetwork) -> String {
    let b = if net.blocks.is_empty() {
        Aabb {
            min: Vec2::ZERO,
            max: Vec2::ZERO,
        }
    } else {
        bounds(net).expanded(MARGIN)
    };
    let (w, h) = (b.max.x - b.min.x, b.max.y - b.min.y);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{:.3} {:.3} {:.3} {:.3}">"#,
        b.min.x, -b.max.y, w, h
    );
    out.push_str(
        "<rect x=\"-100000\" y=\"-100000\" width=\"200000\" height=\"200000\" fill=\"#2b2b2b\"/>\n",
    );
    for (bi, block) in net.blocks.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<g class="block" data-index="{bi}" data-type="{}">"#,
            block.kind.name()
        );
        for road in &block.roads {
            for k in 0..=road.lanes {
                let pts = discretize(&road.boundary(k));
                let (class, dash) = match road.line_type(k) {
                    LineType::Solid => ("solid", ""),
                    LineType::Broken => ("broken", r#" stroke-dasharray="3 3""#),
                };
                let _ = writeln!(
                    out,
                    r#"<path class="{class}" d="{}" fill="none" stroke="white" stroke-width="0.15"{dash}/>"#,
                    path_data(&pts)
                );
            }
        }
        for socket in block.sockets.iter() {
            let across = socket.pose.direction().perp() * (socket.lanes as f64 * socket.lane_width);
            let side = if socket.index == 0 { 1.0 } else { -1.0 };
            let a = flip(socket.pose.position);
            let c = flip(socket.pose.position + across * side);
            let _ = writeln!(
                out,
                r#"<line class="socket" x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="orange" stroke-width="0.4"/>"#,
                a.x, a.y, c.x, c.y
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}
