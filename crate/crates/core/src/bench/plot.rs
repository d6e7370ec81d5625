//! SVG line charts of runtime, throughput and speedup against N.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cost::{comm_cost_total, CostParams};

use super::{BenchError, BenchRecord, Model};

/// Files written by [`emit_plots`], in order: runtime, MFLOPS, speedup.
pub const PLOT_FILES: [&str; 3] = ["runtime.svg", "mflops.svg", "speedup.svg"];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// Cost-model prediction drawn as a dashed series on the runtime chart.
#[derive(Debug, Clone, Copy)]
pub struct Overlay {
    pub params: CostParams,
    /// Total process count, master included.
    pub processes: u64,
}

struct Series {
    name: String,
    color: &'static str,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

fn color(model: Model) -> &'static str {
    match model {
        Model::Seq => "#1f77b4",
        Model::Threads => "#2ca02c",
        Model::Msg => "#d62728",
    }
}

fn model_series(records: &[BenchRecord], value: impl Fn(&BenchRecord) -> Option<f64>) -> Vec<Series> {
    Model::ALL
        .iter()
        .filter_map(|&m| {
            let mut points: Vec<(f64, f64)> = records
                .iter()
                .filter(|r| r.model == m)
                .filter_map(|r| value(r).map(|v| (r.n as f64, v)))
                .collect();
            if points.is_empty() {
                return None;
            }
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Some(Series {
                name: m.as_str().to_string(),
                color: color(m),
                dashed: false,
                points,
            })
        })
        .collect()
}

/// Predicted message-passing runtime: modeled communication plus the
/// sequential time split over the workers, or communication alone when no
/// sequential record exists at that N.
fn predicted_series(records: &[BenchRecord], overlay: &Overlay) -> Result<Series, BenchError> {
    let mut dims: Vec<usize> = records.iter().map(|r| r.n).collect();
    dims.sort_unstable();
    dims.dedup();
    let workers = overlay.processes.saturating_sub(1).max(1) as f64;
    let mut points = Vec::with_capacity(dims.len());
    for n in dims {
        let comm = comm_cost_total(n as u64, overlay.processes, &overlay.params)
            .map_err(|e| BenchError::Config(e.to_string()))?;
        let compute = records
            .iter()
            .find(|r| r.model == Model::Seq && r.n == n)
            .map_or(0.0, |r| r.elapsed / workers);
        points.push((n as f64, comm + compute));
    }
    Ok(Series {
        name: "msg-predicted".into(),
        color: "#d62728",
        dashed: true,
        points,
    })
}

/// Writes [`PLOT_FILES`] into `dir`, one line per model present.
pub fn emit_plots(
    records: &[BenchRecord],
    dir: &Path,
    overlay: Option<&Overlay>,
) -> Result<(), BenchError> {
    if records.is_empty() {
        return Err(BenchError::Config("no records to plot".into()));
    }
    fs::create_dir_all(dir)?;

    let mut runtime = model_series(records, |r| Some(r.elapsed));
    if let Some(o) = overlay {
        runtime.push(predicted_series(records, o)?);
    }
    let charts = [
        ("Running time", "wall time (s)", runtime),
        ("Throughput", "MFLOPS", model_series(records, |r| Some(r.mflops))),
        ("Speedup", "speedup (x)", model_series(records, |r| r.speedup)),
    ];
    for (file, (title, y_label, series)) in PLOT_FILES.iter().zip(charts) {
        fs::write(dir.join(file), render(title, y_label, &series))?;
    }
    Ok(())
}

fn nice_ticks(max: f64) -> Vec<f64> {
    if max <= 0.0 {
        return vec![0.0, 1.0];
    }
    let raw = max / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut ticks = vec![0.0];
    while *ticks.last().unwrap() < max {
        let next = ticks.len() as f64 * step;
        ticks.push(next);
    }
    ticks
}

fn render(title: &str, y_label: &str, series: &[Series]) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (mut x_min, mut x_max) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    });
    if !x_min.is_finite() {
        (x_min, x_max) = (0.0, 1.0);
    }
    if x_max <= x_min {
        x_min -= 1.0;
        x_max += 1.0;
    }
    let y_top = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .fold(0.0f64, f64::max);
    let y_ticks = nice_ticks(y_top);
    let y_max = *y_ticks.last().unwrap();

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| TOP + plot_h - y / y_max * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );

    // Axes, grid and ticks.
    let _ = writeln!(
        svg,
        r#"<g class="axes" stroke="black"><line x1="{LEFT}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b}"/></g>"#,
        b = TOP + plot_h,
        r = LEFT + plot_w
    );
    for &t in &y_ticks {
        let y = sy(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0,
            super::format_sig(t)
        );
    }
    let mut x_ticks: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    x_ticks.sort_by(f64::total_cmp);
    x_ticks.dedup();
    for &t in &x_ticks {
        let x = sx(t);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 18.0,
            super::format_sig(t)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">matrix dimension N</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );

    for (idx, s) in series.iter().enumerate() {
        let name = escape(&s.name);
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let points: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-series="{name}" fill="none" stroke="{}" stroke-width="2"{dash} points="{}"/>"#,
            s.color,
            points.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle class="point" data-series="{name}" data-n="{x}" data-value="{y}" cx="{:.2}" cy="{:.2}" r="3" fill="{}"><title>{name} N={x}: {}</title></circle>"#,
                sx(x),
                sy(y),
                s.color,
                super::format_sig(y)
            );
        }
        let ly = TOP + 10.0 + idx as f64 * 20.0;
        let lx = LEFT + plot_w + 16.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/><text x="{}" y="{}">{name}</text></g>"#,
            lx + 24.0,
            s.color,
            lx + 30.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(model: Model, n: usize, t: f64, t_seq: f64) -> BenchRecord {
        BenchRecord::new(model, n, 2, t).unwrap().paired(t_seq).unwrap()
    }

    #[test]
    fn ticks_cover_max() {
        assert_eq!(nice_ticks(10.0), [0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        let t = nice_ticks(241.0);
        assert!(*t.last().unwrap() >= 241.0);
        assert!(t.len() <= 7);
    }

    #[test]
    fn overlay_adds_dashed_series() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![rec(Model::Seq, 10, 1.0, 1.0), rec(Model::Msg, 10, 0.6, 1.0)];
        let overlay = Overlay {
            params: CostParams::new(1e-6, 1e-7).unwrap(),
            processes: 3,
        };
        emit_plots(&records, dir.path(), Some(&overlay)).unwrap();
        let svg = fs::read_to_string(dir.path().join("runtime.svg")).unwrap();
        assert!(svg.contains(r#"data-series="msg-predicted""#));
        assert!(svg.contains("stroke-dasharray"));
        let mflops = fs::read_to_string(dir.path().join("mflops.svg")).unwrap();
        assert!(!mflops.contains("msg-predicted"));
    }

    fn circles(svg: &str, series: &str) -> Vec<(f64, f64)> {
        let key = format!(r#"class="point" data-series="{series}""#);
        svg.lines()
            .filter(|l| l.contains(&key))
            .map(|l| {
                let attr = |name: &str| -> f64 {
                    l.split(&format!(r#"{name}=""#)).nth(1).unwrap().split('"').next().unwrap().parse().unwrap()
                };
                (attr("data-n"), attr("data-value"))
            })
            .collect()
    }

    #[test]
    fn reference_curves_have_expected_shape() {
        let dir = tempfile::tempdir().unwrap();
        emit_plots(&crate::bench::golden::reference_records(), dir.path(), None).unwrap();
        let svg = fs::read_to_string(dir.path().join("runtime.svg")).unwrap();
        assert_eq!(svg.matches(r#"class="series""#).count(), 3);
        let at = |series: &str, n: f64| circles(&svg, series).into_iter().find(|p| p.0 == n).unwrap().1;
        assert!(at("msg", 2000.0) < at("threads", 2000.0));
        assert!(at("threads", 2000.0) < at("seq", 2000.0));
        assert!(at("msg", 100.0) > at("seq", 100.0));

        let speed = fs::read_to_string(dir.path().join("speedup.svg")).unwrap();
        let msg = circles(&speed, "msg");
        assert_eq!(msg.len(), 4);
        assert!(msg.windows(2).all(|w| w[1].1 > w[0].1), "{msg:?}");
    }

    #[test]
    fn empty_records_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plots(&[], dir.path(), None).is_err());
    }
}
