use std::fmt::Write;

use super::AccrualFile;
use crate::gridworld::Move;
use crate::mdp::{ConstraintKind, MinimalConstraint};

/// Shades from lowest to highest accrued mass.
const SHADES: &[u8] = b" .:-=+*#%@";
const CELL: usize = 24;
const GAP: usize = 24;

/// A rectangular panel of values in `[0, 1]`; row 0 is drawn at the bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub title: String,
    pub width: usize,
    pub height: usize,
    /// Indexed `y * width + x`; `None` marks an unused cell.
    pub values: Vec<Option<f64>>,
    pub marked: Vec<bool>,
    pub labels: Vec<String>,
}

impl Heatmap {
    fn new(title: &str, width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            title: title.to_owned(),
            width,
            height,
            values: vec![None; n],
            marked: vec![false; n],
            labels: vec![String::new(); n],
        }
    }

    fn set(&mut self, x: usize, y: usize, value: f64, marked: bool, label: String) {
        let i = y * self.width + x;
        self.values[i] = Some(value.clamp(0.0, 1.0));
        self.marked[i] = marked;
        self.labels[i] = label;
    }
}

/// State, action and feature panels of one accrual history.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSet {
    pub states: Heatmap,
    pub actions: Heatmap,
    pub features: Heatmap,
}

impl HeatmapSet {
    /// Panels shaded by `Φ̃_T` with the file's marked constraints.
    ///
    /// States follow the grid layout when present; grid actions are placed
    /// on a compass around `stay`.
    pub fn from_accrual(file: &AccrualFile) -> Self {
        let phi = file.final_column();
        let (k, n_s, n_a) = (file.n_features, file.n_states, file.n_actions);
        let marked = |kind, index| file.marked.contains(&MinimalConstraint { kind, index });

        let (w, h) = file.layout.map_or((n_s, 1), |l| (l.width, l.height));
        let mut states = Heatmap::new("states", w, h);
        for s in 0..n_s {
            states.set(s % w, s / w, phi[k + s], marked(ConstraintKind::State, s), s.to_string());
        }

        let compass: Option<Vec<(usize, usize)>> = file
            .action_names
            .iter()
            .map(|name| {
                name.parse::<Move>().ok().map(|m| {
                    let (dx, dy) = m.delta();
                    ((dx + 1) as usize, (dy + 1) as usize)
                })
            })
            .collect();
        let mut actions = match compass {
            Some(_) => Heatmap::new("actions", 3, 3),
            None => Heatmap::new("actions", n_a, 1),
        };
        for a in 0..n_a {
            let (x, y) = compass.as_ref().map_or((a, 0), |c| c[a]);
            actions.set(x, y, phi[k + n_s + a], marked(ConstraintKind::Action, a), file.action_names[a].clone());
        }

        let mut features = Heatmap::new("features", 1, k);
        for i in 0..k {
            // first feature on top
            features.set(0, k - 1 - i, phi[i], marked(ConstraintKind::Feature, i), file.feature_names[i].clone());
        }
        Self { states, actions, features }
    }

    fn panels(&self) -> [&Heatmap; 3] {
        [&self.states, &self.actions, &self.features]
    }
}

fn shade(v: f64) -> char {
    let i = (v * (SHADES.len() - 1) as f64).round() as usize;
    SHADES[i.min(SHADES.len() - 1)] as char
}

/// One character per cell: the shade glyph, `X` for marked cells, and a
/// blank for unused ones.
pub fn render_ascii(set: &HeatmapSet) -> String {
    let mut out = String::new();
    for panel in set.panels() {
        let _ = writeln!(out, "{}", panel.title);
        let border = format!("+{}+", "-".repeat(panel.width));
        let _ = writeln!(out, "{border}");
        for y in (0..panel.height).rev() {
            out.push('|');
            for x in 0..panel.width {
                let i = y * panel.width + x;
                out.push(match panel.values[i] {
                    _ if panel.marked[i] => 'X',
                    Some(v) => shade(v),
                    None => ' ',
                });
            }
            out.push_str("|\n");
        }
        let _ = writeln!(out, "{border}");
    }
    let _ = writeln!(out, "scale: {:?} from 0 to 1, X = constraint", std::str::from_utf8(SHADES).expect("ascii"));
    out
}

fn fill(v: f64) -> String {
    // white to dark blue
    let r = (255.0 - 235.0 * v).round() as u8;
    let g = (255.0 - 200.0 * v).round() as u8;
    let b = (255.0 - 80.0 * v).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Panels side by side; output depends only on the input values.
pub fn render_svg(set: &HeatmapSet) -> String {
    let title_h = 20;
    let total_w: usize = set.panels().iter().map(|p| p.width * CELL + GAP).sum::<usize>() + GAP;
    let total_h = set.panels().iter().map(|p| p.height * CELL).max().unwrap_or(0) + title_h + 2 * GAP;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" viewBox="0 0 {total_w} {total_h}">"#
    );
    let _ = writeln!(out, r#"<rect width="{total_w}" height="{total_h}" fill="white"/>"#);
    let mut x0 = GAP;
    for panel in set.panels() {
        let y0 = GAP + title_h;
        let _ = writeln!(
            out,
            r#"<text x="{x0}" y="{}" font-family="monospace" font-size="14">{}</text>"#,
            GAP + 12,
            escape(&panel.title)
        );
        for y in 0..panel.height {
            for x in 0..panel.width {
                let i = y * panel.width + x;
                let Some(v) = panel.values[i] else { continue };
                let cx = x0 + x * CELL;
                let cy = y0 + (panel.height - 1 - y) * CELL;
                let _ = writeln!(
                    out,
                    r##"<rect x="{cx}" y="{cy}" width="{CELL}" height="{CELL}" fill="{}" stroke="#888888" stroke-width="1"><title>{} {v:.4}</title></rect>"##,
                    fill(v),
                    escape(&panel.labels[i])
                );
                if panel.marked[i] {
                    let (a, b) = (4, CELL - 4);
                    let _ = writeln!(
                        out,
                        r##"<path d="M{} {} L{} {} M{} {} L{} {}" stroke="#d62728" stroke-width="3"/>"##,
                        cx + a,
                        cy + a,
                        cx + b,
                        cy + b,
                        cx + b,
                        cy + a,
                        cx + a,
                        cy + b
                    );
                }
            }
        }
        x0 += panel.width * CELL + GAP;
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accrual::feature_accrual_history;
    use crate::gridworld::shipped_gridworld;
    use crate::maxent::backward_pass;
    use crate::mdp::AugmentedFeatureMap;

    fn tiny_file(marked: Vec<MinimalConstraint>) -> AccrualFile {
        let world = shipped_gridworld("tiny_3x3_oracle").unwrap();
        let (pol, _) = backward_pass(&world.nominal).unwrap();
        let map = AugmentedFeatureMap::new(&world.nominal);
        let hist = feature_accrual_history(&world.nominal, &map, &pol).unwrap();
        AccrualFile::new(&world.nominal, &hist, marked, None)
    }

    #[test]
    fn zero_accrual_is_blank() {
        let mut file = tiny_file(vec![]);
        for col in &mut file.columns {
            col.iter_mut().for_each(|v| *v = 0.0);
        }
        let text = render_ascii(&HeatmapSet::from_accrual(&file));
        let states: Vec<&str> = text.lines().skip(2).take(3).collect();
        assert_eq!(states, ["|   |", "|   |", "|   |"]);
    }

    #[test]
    fn marks_land_on_cells() {
        // state 5 is cell (2, 1): middle row, right column
        let file = tiny_file(vec![MinimalConstraint::state(5), MinimalConstraint::action(Move::Up.index())]);
        let set = HeatmapSet::from_accrual(&file);
        let text = render_ascii(&set);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(&lines[3][3..4], "X");
        assert!(set.actions.marked[2 * 3 + 1]);
        let svg = render_svg(&set);
        assert_eq!(svg, render_svg(&set));
        assert_eq!(svg.matches("<path").count(), 2);
    }
}
