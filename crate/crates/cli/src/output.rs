//! CSV, SVG and JSON artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rodeo::nmqj::ClassWeight;
use rodeo::observables::BlochSeries;

pub const TRAJECTORY_HEADER: &str = "t,x_exact,y_exact,z_exact,x_mc,y_mc,z_mc,stderr_x,stderr_y,stderr_z,n_classes,reverse_jumps_cum,breakdown_flag";

/// Class bookkeeping of a reverse-jump run, aligned with its grid prefix.
pub struct ClassSeries<'a> {
    pub populations: &'a [Vec<ClassWeight<f64>>],
    pub reverse_jumps: &'a [u64],
    /// Grid index from which the breakdown flag is raised.
    pub breakdown_step: Option<usize>,
}

/// Renders `trajectory.csv`. Cells that do not apply to the run stay blank;
/// stochastic columns end where a truncated run stopped.
pub fn trajectory_csv(
    exact: &BlochSeries<f64>,
    mc: Option<&BlochSeries<f64>>,
    classes: Option<&ClassSeries>,
) -> String {
    let mut out = String::with_capacity(exact.len() * 160);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for k in 0..exact.len() {
        let _ = write!(
            out,
            "{},{},{},{}",
            exact.times[k], exact.x[k], exact.y[k], exact.z[k]
        );
        match mc.filter(|m| k < m.len()) {
            Some(m) => {
                let _ = write!(
                    out,
                    ",{},{},{},{},{},{}",
                    m.x[k], m.y[k], m.z[k], m.stderr_x[k], m.stderr_y[k], m.stderr_z[k]
                );
            }
            None => out.push_str(",,,,,,"),
        }
        match classes {
            Some(c) => {
                match c.populations.get(k) {
                    Some(p) => {
                        let _ = write!(out, ",{}", p.len());
                    }
                    None => out.push(','),
                }
                match c.reverse_jumps.get(k) {
                    Some(r) => {
                        let _ = write!(out, ",{r}");
                    }
                    None => out.push(','),
                }
                let flag = c.breakdown_step.is_some_and(|s| k >= s);
                let _ = write!(out, ",{}", u8::from(flag));
            }
            None => out.push_str(",,,"),
        }
        out.push('\n');
    }
    out
}

pub fn populations_csv(times: &[f64], populations: &[Vec<ClassWeight<f64>>]) -> String {
    let mut out = String::from("t,class_id,weight\n");
    for (t, row) in times.iter().zip(populations) {
        for c in row {
            let _ = writeln!(out, "{t},{},{}", c.class_id, c.weight);
        }
    }
    out
}

const WIDTH: f64 = 800.0;
const PANEL: f64 = 260.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 110.0;
const MARGIN_T: f64 = 30.0;
const GAP: f64 = 50.0;
const MAX_POINTS: usize = 600;
const COLOURS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

struct Panel {
    top: f64,
    t_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Panel {
    fn x(&self, t: f64) -> f64 {
        let w = WIDTH - MARGIN_L - MARGIN_R;
        MARGIN_L
            + if self.t_max > 0.0 {
                t / self.t_max * w
            } else {
                0.0
            }
    }

    fn y(&self, v: f64) -> f64 {
        self.top + PANEL - (v - self.y_min) / (self.y_max - self.y_min) * PANEL
    }

    fn frame(&self, out: &mut String, title: &str, y_label: &str) {
        let (x0, x1) = (self.x(0.0), self.x(self.t_max));
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.1}" y="{:.1}" width="{:.1}" height="{PANEL:.1}" fill="none" stroke="#444"/>"##,
            self.top,
            x1 - x0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x0:.1}" y="{:.1}" font-size="13">{title}</text>"#,
            self.top - 8.0
        );
        for i in 0..=4 {
            let v = self.y_min + (self.y_max - self.y_min) * i as f64 / 4.0;
            let y = self.y(v);
            let _ = writeln!(
                out,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{x0:.1}" y2="{y:.1}" stroke="#444"/><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.2}</text>"##,
                x0 - 4.0,
                x0 - 6.0,
                y + 3.0
            );
            let t = self.t_max * i as f64 / 4.0;
            let x = self.x(t);
            let yb = self.top + PANEL;
            let _ = writeln!(
                out,
                r##"<line x1="{x:.1}" y1="{yb:.1}" x2="{x:.1}" y2="{:.1}" stroke="#444"/><text x="{x:.1}" y="{:.1}" font-size="10" text-anchor="middle">{t:.2}</text>"##,
                yb + 4.0,
                yb + 16.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.1}" font-size="11" transform="rotate(-90 14 {:.1})" text-anchor="middle">{y_label}</text>"#,
            self.top + PANEL / 2.0,
            self.top + PANEL / 2.0
        );
    }

    fn polyline(&self, out: &mut String, pts: &[(f64, f64)], colour: &str, dashed: bool) {
        if pts.is_empty() {
            return;
        }
        let stride = pts.len().div_ceil(MAX_POINTS).max(1);
        let mut d = String::new();
        for (i, &(t, v)) in pts.iter().enumerate() {
            if i % stride == 0 || i + 1 == pts.len() {
                let v = v.clamp(self.y_min, self.y_max);
                let _ = write!(d, "{:.2},{:.2} ", self.x(t), self.y(v));
            }
        }
        let dash = if dashed {
            r#" stroke-dasharray="5,3""#
        } else {
            ""
        };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"{dash}/>"#,
            d.trim_end()
        );
    }

    fn legend(&self, out: &mut String, row: usize, label: &str, colour: &str, dashed: bool) {
        let x = WIDTH - MARGIN_R + 12.0;
        let y = self.top + 12.0 + 16.0 * row as f64;
        let dash = if dashed {
            r#" stroke-dasharray="5,3""#
        } else {
            ""
        };
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{colour}" stroke-width="1.5"{dash}/><text x="{:.1}" y="{:.1}" font-size="11">{label}</text>"#,
            x + 22.0,
            x + 26.0,
            y + 4.0
        );
    }
}

/// Two-panel plot: Bloch components (exact solid, stochastic dashed) above,
/// class weights below.
pub fn bloch_svg(
    title: &str,
    exact: &BlochSeries<f64>,
    mc: Option<&BlochSeries<f64>>,
    populations: Option<&[Vec<ClassWeight<f64>>]>,
) -> String {
    let t_max = exact.times.last().copied().unwrap_or(0.0);
    let height = MARGIN_T + 2.0 * PANEL + GAP + 30.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    let top = Panel {
        top: MARGIN_T,
        t_max,
        y_min: -1.0,
        y_max: 1.0,
    };
    top.frame(&mut out, &format!("{title}: Bloch components"), "⟨σ⟩");
    for (axis, name) in ["x", "y", "z"].into_iter().enumerate() {
        let colour = COLOURS[axis];
        let (v, _) = exact.component(axis);
        let pts: Vec<_> = exact.times.iter().copied().zip(v.iter().copied()).collect();
        top.polyline(&mut out, &pts, colour, false);
        top.legend(&mut out, axis, &format!("{name} exact"), colour, false);
        if let Some(m) = mc {
            let (v, _) = m.component(axis);
            let pts: Vec<_> = m.times.iter().copied().zip(v.iter().copied()).collect();
            top.polyline(&mut out, &pts, colour, true);
            top.legend(
                &mut out,
                axis + 3,
                &format!("{name} stochastic"),
                colour,
                true,
            );
        }
    }

    let bottom = Panel {
        top: MARGIN_T + PANEL + GAP,
        t_max,
        y_min: 0.0,
        y_max: 1.0,
    };
    bottom.frame(&mut out, "class weights", "N_i / N");
    if let Some(pops) = populations {
        let mut ids: Vec<usize> = pops.iter().flatten().map(|c| c.class_id).collect();
        ids.sort_unstable();
        ids.dedup();
        for (row, id) in ids.iter().enumerate() {
            let colour = COLOURS[row % COLOURS.len()];
            let pts: Vec<_> = exact
                .times
                .iter()
                .zip(pops)
                .map(|(&t, p)| {
                    (
                        t,
                        p.iter()
                            .find(|c| c.class_id == *id)
                            .map_or(0.0, |c| c.weight),
                    )
                })
                .collect();
            bottom.polyline(&mut out, &pts, colour, false);
            if row < 14 {
                bottom.legend(&mut out, row, &format!("class {id}"), colour, false);
            }
        }
    } else {
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle" fill="#666">no class ensemble in this mode</text>"##,
            bottom.x(t_max / 2.0),
            bottom.top + PANEL / 2.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, contents)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(n: usize, se: f64) -> BlochSeries<f64> {
        BlochSeries {
            times: (0..n).map(|k| k as f64 * 0.5).collect(),
            x: vec![1.0; n],
            y: vec![0.0; n],
            z: vec![-0.25; n],
            stderr_x: vec![se; n],
            stderr_y: vec![se; n],
            stderr_z: vec![se; n],
        }
    }

    #[test]
    fn exact_only_rows_have_blank_cells() {
        let csv = trajectory_csv(&series(2, 0.0), None, None);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert_eq!(lines[1], "0,1,0,-0.25,,,,,,,,,");
        assert_eq!(lines[2], "0.5,1,0,-0.25,,,,,,,,,");
        assert!(lines.iter().all(|l| l.split(',').count() == 13));
    }

    #[test]
    fn class_columns_and_breakdown_flag() {
        let pops = vec![
            vec![ClassWeight {
                class_id: 0,
                weight: 1.0,
            }],
            vec![
                ClassWeight {
                    class_id: 0,
                    weight: 0.75,
                },
                ClassWeight {
                    class_id: 1,
                    weight: 0.25,
                },
            ],
        ];
        let classes = ClassSeries {
            populations: &pops,
            reverse_jumps: &[0, 3],
            breakdown_step: Some(1),
        };
        let mc = series(2, 0.125);
        let csv = trajectory_csv(&series(3, 0.0), Some(&mc), Some(&classes));
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[1], "0,1,0,-0.25,1,0,-0.25,0.125,0.125,0.125,1,0,0");
        assert_eq!(lines[2], "0.5,1,0,-0.25,1,0,-0.25,0.125,0.125,0.125,2,3,1");
        assert_eq!(lines[3], "1,1,0,-0.25,,,,,,,,,1");

        let pop_csv = populations_csv(&[0.0, 0.5], &pops);
        assert_eq!(
            pop_csv,
            "t,class_id,weight\n0,0,1\n0.5,0,0.75\n0.5,1,0.25\n"
        );
    }

    #[test]
    fn svg_is_well_formed() {
        let s = series(2000, 0.01);
        let pops = vec![
            vec![ClassWeight {
                class_id: 4,
                weight: 1.0
            }];
            2000
        ];
        let svg = bloch_svg("demo", &s, Some(&s), Some(&pops));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 7);
        assert!(svg.contains("class 4"));
        let longest = svg
            .lines()
            .filter(|l| l.starts_with("<polyline"))
            .map(|l| l.matches(',').count())
            .max()
            .unwrap();
        assert!(longest <= MAX_POINTS + 1);
        let empty = bloch_svg("exact", &s, None, None);
        assert_eq!(empty.matches("<polyline").count(), 3);
    }
}
