//! Plot-ready exports: gnuplot data files plus a static SVG line plot.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Bode,
    Sensitivity,
    Trace,
}

impl std::str::FromStr for PlotKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bode" => Ok(PlotKind::Bode),
            "sensitivity" => Ok(PlotKind::Sensitivity),
            "trace" => Ok(PlotKind::Trace),
            _ => Err(format!("unknown plot kind {s:?} (bode|sensitivity|trace)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlotOutput {
    pub data: PathBuf,
    /// Reset-marker data file (trace plots only).
    pub markers: Option<PathBuf>,
    pub image: Option<PathBuf>,
    pub series: usize,
    pub rows: usize,
    pub marker_count: usize,
}

const FRF_HEADER: &str = "freq_hz,mag_db,phase_deg";
const HARMONIC_HEADER: &str = "freq_hz,order,mag_db,phase_deg,rss_db";
const TRACE_HEADER: &str = "t,r,e,e_s,u_r,u,x,y,reset_flag";

struct Table {
    header: String,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| CliError::Plot(format!("{}: empty file", path.display())))?
        .trim()
        .to_string();
    let rows = lines
        .enumerate()
        .map(|(i, l)| {
            l.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| CliError::Plot(format!("{}: bad numeric row {}", path.display(), i + 2)))
        })
        .collect::<Result<_, _>>()?;
    Ok(Table { header, rows })
}

fn expect_header(path: &Path, t: &Table, allowed: &[&str], kind: &str) -> Result<(), CliError> {
    if allowed.contains(&t.header.as_str()) {
        Ok(())
    } else {
        Err(CliError::Plot(format!(
            "{}: header {:?} does not match a {kind} artifact",
            path.display(),
            t.header
        )))
    }
}

/// `(freq, mag_db, phase_deg)` rows from an FRF file or the order-1 rows of a
/// harmonic response file.
fn frf_series(t: &Table) -> Vec<(f64, f64, f64)> {
    if t.header == HARMONIC_HEADER {
        t.rows.iter().filter(|r| r[1] == 1.0).map(|r| (r[0], r[2], r[3])).collect()
    } else {
        t.rows.iter().map(|r| (r[0], r[1], r[2])).collect()
    }
}

/// Default label: the case directory for `<out>/<case>/<command>/file.csv`,
/// else the file stem.
fn default_label(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.parent())
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.file_stem().unwrap_or_default().to_string_lossy().into_owned())
}

/// Writes `<out>/<stem>.dat` (and `.svg` when `image` is set) for the given
/// artifacts. Bode and trace kinds take exactly one input.
pub fn emit_plot_data(
    kind: PlotKind,
    inputs: &[PathBuf],
    labels: &[String],
    out: &Path,
    image: bool,
) -> Result<PlotOutput, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Plot("no input artifacts".into()));
    }
    if kind != PlotKind::Sensitivity && inputs.len() != 1 {
        return Err(CliError::Plot("bode and trace plots take exactly one input".into()));
    }
    std::fs::create_dir_all(out)?;
    let stem = match kind {
        PlotKind::Sensitivity => "sensitivity".to_string(),
        _ => inputs[0].file_stem().unwrap_or_default().to_string_lossy().into_owned(),
    };
    let data = out.join(format!("{stem}.dat"));
    let svg = out.join(format!("{stem}.svg"));
    let mut res = PlotOutput {
        data: data.clone(),
        markers: None,
        image: image.then(|| svg.clone()),
        series: 0,
        rows: 0,
        marker_count: 0,
    };
    match kind {
        PlotKind::Bode => {
            let t = read_table(&inputs[0])?;
            expect_header(&inputs[0], &t, &[FRF_HEADER, HARMONIC_HEADER], "bode")?;
            let s = frf_series(&t);
            let mut w = BufWriter::new(File::create(&data)?);
            writeln!(w, "# freq_hz mag_db phase_deg")?;
            for (f, m, p) in &s {
                writeln!(w, "{f} {m} {p}")?;
            }
            w.flush()?;
            res.series = 1;
            res.rows = s.len();
            if image {
                draw_bode(&svg, &s).map_err(|e| CliError::Plot(e.to_string()))?;
            }
        }
        PlotKind::Sensitivity => {
            let mut all = Vec::new();
            for (i, p) in inputs.iter().enumerate() {
                let t = read_table(p)?;
                expect_header(p, &t, &[FRF_HEADER, HARMONIC_HEADER], "sensitivity")?;
                let label = labels.get(i).cloned().unwrap_or_else(|| default_label(p));
                all.push((label, frf_series(&t)));
            }
            let mut w = BufWriter::new(File::create(&data)?);
            for (i, (label, s)) in all.iter().enumerate() {
                if i > 0 {
                    writeln!(w, "\n")?;
                }
                writeln!(w, "# series: {label}")?;
                writeln!(w, "# freq_hz mag_db phase_deg")?;
                for (f, m, p) in s {
                    writeln!(w, "{f} {m} {p}")?;
                }
            }
            w.flush()?;
            res.series = all.len();
            res.rows = all.iter().map(|(_, s)| s.len()).sum();
            if image {
                draw_overlay(&svg, &all).map_err(|e| CliError::Plot(e.to_string()))?;
            }
        }
        PlotKind::Trace => {
            let t = read_table(&inputs[0])?;
            expect_header(&inputs[0], &t, &[TRACE_HEADER], "trace")?;
            let mut w = BufWriter::new(File::create(&data)?);
            writeln!(w, "# t r e u y")?;
            for r in &t.rows {
                writeln!(w, "{} {} {} {} {}", r[0], r[1], r[2], r[5], r[7])?;
            }
            w.flush()?;
            let marks: Vec<(f64, f64)> = t.rows.iter().filter(|r| r[8] != 0.0).map(|r| (r[0], r[2])).collect();
            let mpath = out.join(format!("{stem}_resets.dat"));
            let mut w = BufWriter::new(File::create(&mpath)?);
            writeln!(w, "# t e (reset events)")?;
            for (t, e) in &marks {
                writeln!(w, "{t} {e}")?;
            }
            w.flush()?;
            res.series = 3;
            res.rows = t.rows.len();
            res.markers = Some(mpath);
            res.marker_count = marks.len();
            if image {
                draw_trace(&svg, &t.rows, &marks).map_err(|e| CliError::Plot(e.to_string()))?;
            }
        }
    }
    Ok(res)
}

type DrawResult = Result<(), Box<dyn std::error::Error>>;

fn bounds(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.filter(|x| x.is_finite()).fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(x), b.max(x)));
    if lo > hi {
        (0.0, 1.0)
    } else if hi - lo < 1e-9 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

const PALETTE: [RGBColor; 7] = [
    RGBColor(0, 0, 0),
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn draw_bode(path: &Path, s: &[(f64, f64, f64)]) -> DrawResult {
    let root = SVGBackend::new(path, (800, 600)).into_drawing_area();
    root.fill(&WHITE)?;
    let (top, bottom) = root.split_vertically(300);
    let (f0, f1) = (s[0].0, s[s.len() - 1].0);
    let (m0, m1) = bounds(s.iter().map(|p| p.1));
    let (p0, p1) = bounds(s.iter().map(|p| p.2));
    let mut c = ChartBuilder::on(&top)
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d((f0..f1).log_scale(), m0..m1)?;
    c.configure_mesh().y_desc("magnitude (dB)").draw()?;
    c.draw_series(LineSeries::new(s.iter().map(|p| (p.0, p.1)), &PALETTE[1]))?;
    let mut c = ChartBuilder::on(&bottom)
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d((f0..f1).log_scale(), p0..p1)?;
    c.configure_mesh().x_desc("frequency (Hz)").y_desc("phase (deg)").draw()?;
    c.draw_series(LineSeries::new(s.iter().map(|p| (p.0, p.2)), &PALETTE[1]))?;
    root.present()?;
    Ok(())
}

fn draw_overlay(path: &Path, all: &[(String, Vec<(f64, f64, f64)>)]) -> DrawResult {
    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE)?;
    let (f0, f1) = bounds(all.iter().flat_map(|(_, s)| s.iter().map(|p| p.0.ln())));
    let (m0, m1) = bounds(all.iter().flat_map(|(_, s)| s.iter().map(|p| p.1)));
    let mut c = ChartBuilder::on(&root)
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d((f0.exp()..f1.exp()).log_scale(), m0..m1)?;
    c.configure_mesh().x_desc("frequency (Hz)").y_desc("magnitude (dB)").draw()?;
    for (i, (label, s)) in all.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        c.draw_series(LineSeries::new(s.iter().map(|p| (p.0, p.1)), &color))?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    c.configure_series_labels().background_style(WHITE).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

fn draw_trace(path: &Path, rows: &[Vec<f64>], marks: &[(f64, f64)]) -> DrawResult {
    let root = SVGBackend::new(path, (900, 500)).into_drawing_area();
    root.fill(&WHITE)?;
    let (t0, t1) = (rows[0][0], rows[rows.len() - 1][0].max(rows[0][0] + 1e-9));
    let (v0, v1) = bounds(rows.iter().flat_map(|r| [r[1], r[2], r[7]]));
    let mut c = ChartBuilder::on(&root)
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(50)
        .build_cartesian_2d(t0..t1, v0..v1)?;
    c.configure_mesh().x_desc("time (s)").y_desc("amplitude").draw()?;
    for (col, name, color) in [(1, "r", PALETTE[0]), (7, "y", PALETTE[1]), (2, "e", PALETTE[2])] {
        c.draw_series(LineSeries::new(rows.iter().map(|r| (r[0], r[col])), &color))?
            .label(name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    c.draw_series(marks.iter().map(|&(t, e)| Circle::new((t, e), 3, PALETTE[4].filled())))?
        .label("reset")
        .legend(|(x, y)| Circle::new((x + 8, y), 3, PALETTE[4].filled()));
    c.configure_series_labels().background_style(WHITE).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn kind_names() {
        assert_eq!("bode".parse::<PlotKind>(), Ok(PlotKind::Bode));
        assert_eq!("trace".parse::<PlotKind>(), Ok(PlotKind::Trace));
        assert!("nyquist".parse::<PlotKind>().is_err());
    }

    #[test]
    fn harmonic_files_plot_their_first_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "h.csv",
            &format!("# comment\n{HARMONIC_HEADER}\n1,1,0,-10,0\n1,3,-20,5,0\n2,1,-1,-20,0\n2,3,-25,4,0\n"),
        );
        let res = emit_plot_data(PlotKind::Bode, &[p], &[], &dir.path().join("o"), false).unwrap();
        assert_eq!((res.series, res.rows), (1, 2));
        let dat = std::fs::read_to_string(res.data).unwrap();
        assert!(dat.contains("2 -1 -20"));
    }

    #[test]
    fn bad_rows_and_headers_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        let bad_row = write(dir.path(), "a.csv", &format!("{FRF_HEADER}\n1,x,0\n"));
        let err = emit_plot_data(PlotKind::Bode, &[bad_row], &[], &out, false).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        let wrong = write(dir.path(), "b.csv", "a,b\n1,2\n");
        assert!(emit_plot_data(PlotKind::Trace, &[wrong], &[], &out, false).is_err());
        let empty = write(dir.path(), "c.csv", "");
        assert!(emit_plot_data(PlotKind::Bode, &[empty], &[], &out, false).is_err());
        assert!(emit_plot_data(PlotKind::Bode, &[], &[], &out, false).is_err());
    }

    #[test]
    fn default_label_is_the_case_directory() {
        assert_eq!(default_label(Path::new("out/case3/margins/sensitivity.csv")), "case3");
        assert_eq!(default_label(Path::new("s.csv")), "s");
    }
}
