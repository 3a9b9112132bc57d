//! The `rshape` analysis and simulation commands. Each writes its artifacts
//! to `<out>/<case>/<command>/` and returns a printable summary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use reset_shaping::hosidf::{
    cglp_harmonics, complementary_harmonics, crossover_from_harmonics, open_loop_harmonics,
    sensitivity_harmonics, HarmonicResponse,
};
use reset_shaping::lti::{closed_loop_bandwidth, log_grid, mag_db, unwrap_phase_deg, LoopMargins};
use reset_shaping::plant::save_frf_csv;
use reset_shaping::sim::{
    count_resets_per_period, measure_frf_sweep, rms_error, run_closed_loop, samples_per_period,
    snap_frequency, steady_state_harmonics, Signal, SignalSpec, SweepPoint, SweepSelector,
};
use reset_shaping::tuning::fractional_lead_lag_fit;
use reset_shaping::FrfPoint;

use crate::config::{BuiltCase, CaseConfig};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Hosidf,
    Margins,
    Tune,
    Simulate,
    Sweep,
    RmsTable,
}

impl Command {
    pub fn dir_name(&self) -> &'static str {
        match self {
            Command::Hosidf => "hosidf",
            Command::Margins => "margins",
            Command::Tune => "tune",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::RmsTable => "rms-table",
        }
    }
}

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// `(f_min, f_max, points_per_decade)`; analysis grid, or the sweep grid
    /// for `sweep`.
    pub grid: Option<(f64, f64, usize)>,
    /// Reference frequency for `simulate`.
    pub freq_hz: Option<f64>,
    pub seed: Option<u64>,
    pub harmonics: Option<Vec<u32>>,
    pub selector: Option<SweepSelector>,
}

#[derive(Debug, Clone)]
pub struct CommandReport {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Parses `fmin:fmax:points-per-decade`.
pub fn parse_grid(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("grid must be fmin:fmax:ppd, got {s:?}"));
    }
    let f0: f64 = parts[0].parse().map_err(|_| format!("bad fmin {:?}", parts[0]))?;
    let f1: f64 = parts[1].parse().map_err(|_| format!("bad fmax {:?}", parts[1]))?;
    let n: usize = parts[2].parse().map_err(|_| format!("bad points per decade {:?}", parts[2]))?;
    if !(f0 > 0.0 && f1 > f0 && n > 0) {
        return Err(format!("grid needs 0 < fmin < fmax and ppd > 0, got {s:?}"));
    }
    Ok((f0, f1, n))
}

/// Loop metrics shared by `hosidf` and `margins`.
#[derive(Debug, Clone)]
pub struct LoopSummary {
    pub margins: LoopMargins,
    pub bandwidth_hz: f64,
    pub s_peak_db: f64,
}

pub fn loop_summary(case: &BuiltCase, grid: &[f64]) -> Result<LoopSummary, CliError> {
    let ctx = module_ctx(&case.name);
    let (_, outer) = open_loop_harmonics(&case.model, grid, &[1]).map_err(&ctx)?;
    let margins = crossover_from_harmonics(&outer).map_err(&ctx)?;
    let t = complementary_harmonics(&case.model, grid, &[1]).map_err(&ctx)?;
    let bandwidth_hz = closed_loop_bandwidth(&t.row(1).expect("order 1")).map_err(&ctx)?;
    let s = sensitivity_harmonics(&case.model, grid, &[1]).map_err(&ctx)?;
    let s_peak_db = s.row(1).expect("order 1").iter().map(|p| p.mag_db()).fold(f64::MIN, f64::max);
    Ok(LoopSummary { margins, bandwidth_hz, s_peak_db })
}

fn module_ctx(case: &str) -> impl Fn(reset_shaping::Error) -> CliError + '_ {
    move |e| CliError::Module { case: case.to_string(), source: e }
}

fn summary_line(name: &str, s: &LoopSummary) -> String {
    format!(
        "{name}: w_b = {:.2} Hz, PM = {:.2} deg, GM = {:.2} dB, w_c = {:.2} Hz, |S_er_1| peak = {:.2} dB",
        s.margins.crossover_hz, s.margins.phase_margin_deg, s.margins.gain_margin_db, s.bandwidth_hz, s.s_peak_db
    )
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Artifacts {
    fn new(out: &Path, case: &str, cmd: Command) -> Result<Self, CliError> {
        let dir = out.join(case).join(cmd.dir_name());
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    fn report(self, summary: String) -> CommandReport {
        CommandReport { dir: self.dir, files: self.files, summary }
    }
}

/// Runs one command for a parsed config. `base_dir` anchors relative paths
/// inside the config.
pub fn run_command(
    cfg: &CaseConfig,
    base_dir: &Path,
    cmd: Command,
    out: &Path,
    ov: &Overrides,
) -> Result<CommandReport, CliError> {
    let mut cfg = cfg.clone();
    if let Some(seed) = ov.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(h) = &ov.harmonics {
        cfg.analysis.orders = h.clone();
    }
    if let Some((f0, f1, n)) = ov.grid {
        if cmd == Command::Sweep {
            (cfg.scenario.sweep.f_min_hz, cfg.scenario.sweep.f_max_hz, cfg.scenario.sweep.points_per_decade) = (f0, f1, n);
        } else {
            (cfg.analysis.f_min_hz, cfg.analysis.f_max_hz, cfg.analysis.points_per_decade) = (f0, f1, n);
        }
    }
    if let Some(sel) = ov.selector {
        cfg.scenario.sweep.selector = sel;
    }
    let case = cfg.build(base_dir)?;
    let mut art = Artifacts::new(out, &cfg.name, cmd)?;
    let summary = match cmd {
        Command::Hosidf => hosidf(&cfg, &case, &mut art)?,
        Command::Margins => margins(&cfg, &case, &mut art)?,
        Command::Tune => tune(&cfg, &case, &mut art)?,
        Command::Simulate => simulate(&cfg, &case, ov.freq_hz, &mut art)?,
        Command::Sweep => sweep(&cfg, &case, &mut art)?,
        Command::RmsTable => rms_table(&cfg, &case, &mut art)?,
    };
    Ok(art.report(summary))
}

fn hosidf(cfg: &CaseConfig, case: &BuiltCase, art: &mut Artifacts) -> Result<String, CliError> {
    let ctx = module_ctx(&case.name);
    let grid = cfg.analysis.grid();
    let orders = &cfg.analysis.orders;
    let m = &case.model;
    cglp_harmonics(m, &grid, orders).map_err(&ctx)?.save_csv(&art.path("cglp.csv")).map_err(&ctx)?;
    let (dual, outer) = open_loop_harmonics(m, &grid, orders).map_err(&ctx)?;
    dual.save_csv(&art.path("open_loop_dual.csv")).map_err(&ctx)?;
    outer.save_csv(&art.path("open_loop.csv")).map_err(&ctx)?;
    sensitivity_harmonics(m, &grid, orders).map_err(&ctx)?.save_csv(&art.path("sensitivity.csv")).map_err(&ctx)?;
    complementary_harmonics(m, &grid, orders).map_err(&ctx)?.save_csv(&art.path("complementary.csv")).map_err(&ctx)?;
    let s = loop_summary(case, &grid)?;
    Ok(summary_line(&case.name, &s))
}

fn margins(cfg: &CaseConfig, case: &BuiltCase, art: &mut Artifacts) -> Result<String, CliError> {
    let ctx = module_ctx(&case.name);
    let grid = cfg.analysis.grid();
    let (_, outer) = open_loop_harmonics(&case.model, &grid, &[1]).map_err(&ctx)?;
    let row = |h: &HarmonicResponse| h.row(1).expect("order 1");
    save_frf_csv(&art.path("loop.csv"), &row(&outer), Some("first-harmonic open loop L_1")).map_err(&ctx)?;
    let s = sensitivity_harmonics(&case.model, &grid, &[1]).map_err(&ctx)?;
    save_frf_csv(&art.path("sensitivity.csv"), &row(&s), Some("S_er_1")).map_err(&ctx)?;
    let t = complementary_harmonics(&case.model, &grid, &[1]).map_err(&ctx)?;
    save_frf_csv(&art.path("complementary.csv"), &row(&t), Some("T_yr_1")).map_err(&ctx)?;
    let sum = loop_summary(case, &grid)?;
    let mut w = art.create("margins.csv")?;
    writeln!(w, "case,crossover_hz,phase_margin_deg,gain_margin_db,bandwidth_hz,s_peak_db")?;
    writeln!(
        w,
        "{},{},{},{},{},{}",
        case.name,
        sum.margins.crossover_hz,
        sum.margins.phase_margin_deg,
        sum.margins.gain_margin_db,
        sum.bandwidth_hz,
        sum.s_peak_db
    )?;
    w.flush()?;
    Ok(summary_line(&case.name, &sum))
}

fn tune(cfg: &CaseConfig, case: &BuiltCase, art: &mut Artifacts) -> Result<String, CliError> {
    let ctx = module_ctx(&case.name);
    let Some(design) = case.design.as_ref() else {
        // linear baseline: nothing to resolve, but still leave a record
        std::fs::write(art.path("design.toml"), "# linear baseline: no CgLp stage\n")?;
        return Ok(format!("{}: linear baseline (no [cglp]), nothing to tune", case.name));
    };
    let mut out = String::new();
    std::fs::write(
        art.path("design.toml"),
        toml::to_string(design).map_err(|e| CliError::Config(e.to_string()))?,
    )?;
    let grid = cfg.analysis.grid();
    let frf: Vec<FrfPoint> = grid
        .iter()
        .map(|&f| design.first_harmonic(f).map(|v| FrfPoint { freq_hz: f, response: v }))
        .collect::<Result<_, _>>()
        .map_err(&ctx)?;
    save_frf_csv(&art.path("cglp_h1.csv"), &frf, Some("first-harmonic CgLp")).map_err(&ctx)?;
    let p = &design.pfore;
    writeln!(
        out,
        "{}: w_r = {:.4} Hz, w_l = {:.4} Hz, w_f = {:.4} Hz, gamma_r = {}, k_c = {:.6}",
        case.name, p.omega_r_hz, p.omega_l_hz, p.omega_f_hz, design.gamma_r, design.k_c
    )
    .ok();
    if design.target_hz.is_finite() {
        let h = design.first_harmonic(design.target_hz).map_err(&ctx)?;
        writeln!(
            out,
            "  phase lead at {:.2} Hz: {:.3} deg (requested {:.3}), gain {:.3} dB",
            design.target_hz,
            h.arg().to_degrees(),
            design.phase_lead_deg,
            mag_db(h)
        )
        .ok();
    }
    if let Some(sp) = &cfg.shaping {
        let fit = fractional_lead_lag_fit(sp).map_err(&ctx)?;
        let mut w = art.create("shaping_fit.csv")?;
        writeln!(w, "freq_hz,target_mag_db,target_phase_deg,fit_mag_db,fit_phase_deg")?;
        let fgrid = log_grid(sp.omega_l_hz / 5.0, sp.omega_h_hz * 5.0, 40);
        let target: Vec<_> = fgrid.iter().map(|&f| sp.fractional_lead_lag(f)).collect();
        let fitted: Vec<_> = fgrid.iter().map(|&f| fit.tf.eval_frf(f)).collect::<Result<_, _>>().map_err(&ctx)?;
        let (pt, pf) = (unwrap_phase_deg(&target), unwrap_phase_deg(&fitted));
        let mut worst = (0.0f64, 0.0f64);
        for i in 0..fgrid.len() {
            writeln!(w, "{},{},{},{},{}", fgrid[i], mag_db(target[i]), pt[i], mag_db(fitted[i]), pf[i])?;
            worst.0 = worst.0.max((mag_db(target[i]) - mag_db(fitted[i])).abs());
            worst.1 = worst.1.max((pt[i] - pf[i]).abs());
        }
        w.flush()?;
        if let Some(cs) = &case.model.shaping {
            let pts = cs.frf(&grid).map_err(&ctx)?;
            save_frf_csv(&art.path("shaping.csv"), &pts, Some("shaping filter C_s")).map_err(&ctx)?;
        }
        writeln!(
            out,
            "  shaping fit (order {}): max error {:.3} dB / {:.3} deg, {} iterations{}",
            sp.order,
            worst.0,
            worst.1,
            fit.iterations,
            if fit.reflected_poles { ", unstable poles reflected" } else { "" }
        )
        .ok();
    }
    Ok(out.trim_end().to_string())
}

/// Reference for `simulate`: config reference with an optional frequency
/// override, snapped to an integer period.
fn sim_reference(cfg: &CaseConfig, freq: Option<f64>) -> SignalSpec {
    let mut r = cfg.scenario.reference;
    if let Some(f) = freq {
        r.freq_hz = f;
    }
    if r.is_periodic() {
        r.freq_hz = snap_frequency(r.freq_hz, cfg.scenario.ts);
    }
    r
}

/// Minimum number of analysed periods after settling in `simulate`.
pub const SIMULATE_ANALYSIS_PERIODS: usize = 10;

fn simulate(cfg: &CaseConfig, case: &BuiltCase, freq: Option<f64>, art: &mut Artifacts) -> Result<String, CliError> {
    let ctx = module_ctx(&case.name);
    let reference = sim_reference(cfg, freq);
    let mut sc = cfg.scenario(case, reference)?;
    if reference.is_periodic() {
        let n = samples_per_period(reference.freq_hz, sc.ts).expect("snapped");
        let need = (sc.settle_samples() + SIMULATE_ANALYSIS_PERIODS * n) as f64 * sc.ts;
        sc.duration_s = sc.duration_s.max(need);
    }
    let tr = run_closed_loop(&sc).map_err(&ctx)?;
    tr.save_csv(&art.path("trace.csv")).map_err(&ctx)?;
    tr.save_reset_log(&art.path("resets.log")).map_err(&ctx)?;
    let rms = rms_error(&tr, cfg.scenario.rms.delay_samples);
    let mut out = format!("{}: {} samples, {} resets, RMS error {:.6}", case.name, tr.len(), tr.resets.len(), rms);
    if reference.is_periodic() {
        let f = reference.freq_hz;
        let count = count_resets_per_period(&tr, f);
        let orders = cfg.analysis.orders.iter().copied().max().unwrap_or(1) as usize;
        let e = steady_state_harmonics(&tr, Signal::E, f, orders).map_err(&ctx)?;
        let r = steady_state_harmonics(&tr, Signal::R, f, 1).map_err(&ctx)?[0];
        let mut w = art.create("harmonics.csv")?;
        writeln!(w, "order,e_mag,e_phase_deg,e_over_r1_db")?;
        for (i, h) in e.iter().enumerate() {
            writeln!(w, "{},{},{},{}", i + 1, h.norm(), h.arg().to_degrees(), mag_db(*h / r))?;
        }
        w.flush()?;
        let mut w = art.create("summary.csv")?;
        writeln!(w, "key,value")?;
        writeln!(w, "freq_hz,{f}")?;
        writeln!(w, "verdict,{}", count.verdict)?;
        writeln!(w, "resets_per_period,{}", join(&count.counts))?;
        writeln!(w, "rms_error,{rms}")?;
        w.flush()?;
        write!(
            out,
            "\n  f = {f:.3} Hz, reset verdict {} (per period: {}{})",
            count.verdict,
            join(&count.counts[..count.counts.len().min(8)]),
            if count.counts.len() > 8 { " ..." } else { "" }
        )
        .ok();
    }
    Ok(out)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Runs the configured sine sweep on the simulation model.
pub fn run_sweep(cfg: &CaseConfig, case: &BuiltCase) -> Result<Vec<SweepPoint>, CliError> {
    let s = &cfg.scenario.sweep;
    let grid = log_grid(s.f_min_hz, s.f_max_hz, s.points_per_decade);
    let sc = cfg.scenario(case, SignalSpec::sine(grid[0], cfg.scenario.reference.amplitude))?;
    Ok(measure_frf_sweep(&sc, &grid, s.selector))
}

fn sweep(cfg: &CaseConfig, case: &BuiltCase, art: &mut Artifacts) -> Result<String, CliError> {
    let ctx = module_ctx(&case.name);
    let sel = cfg.scenario.sweep.selector;
    let points = run_sweep(cfg, case)?;
    let frf = reset_shaping::sim::sweep_frf(&points);
    save_frf_csv(&art.path("sweep.csv"), &frf, Some(&format!("selector={}", sel.label()))).map_err(&ctx)?;
    let freqs: Vec<f64> = points.iter().map(|p| p.freq_hz).collect();
    let predicted = if freqs.windows(2).all(|w| w[1] > w[0]) {
        let h = match sel {
            SweepSelector::Ser => sensitivity_harmonics(&case.model, &freqs, &[1]),
            SweepSelector::Tyr => complementary_harmonics(&case.model, &freqs, &[1]),
        };
        h.ok().and_then(|h| h.row(1))
    } else {
        None
    };
    let mut w = art.create("sweep_detail.csv")?;
    writeln!(w, "requested_hz,freq_hz,mag_db,phase_deg,peak_db,verdict,hosidf_mag_db,hosidf_phase_deg,status")?;
    let mut out = format!("{}: {} sweep ({} points)", case.name, sel.label(), points.len());
    let mut failed = 0;
    for (i, p) in points.iter().enumerate() {
        let (hm, hp) = predicted
            .as_ref()
            .map(|r| (r[i].mag_db(), r[i].response.arg().to_degrees()))
            .unwrap_or((f64::NAN, f64::NAN));
        match &p.result {
            Ok(m) => writeln!(
                w,
                "{},{},{},{},{},{},{},{},ok",
                p.requested_hz,
                p.freq_hz,
                mag_db(m.response),
                m.response.arg().to_degrees(),
                20.0 * m.peak_ratio.log10(),
                m.verdict,
                hm,
                hp
            )?,
            Err(e) => {
                failed += 1;
                writeln!(w, "{},{},,,,,{},{},\"{}\"", p.requested_hz, p.freq_hz, hm, hp, e)?
            }
        }
    }
    w.flush()?;
    if failed > 0 {
        write!(out, ", {failed} failed").ok();
    }
    Ok(out)
}

/// Triangle-reference RMS error at each configured frequency.
pub fn rms_rows(cfg: &CaseConfig, case: &BuiltCase) -> Result<Vec<(f64, f64)>, CliError> {
    let ctx = module_ctx(&case.name);
    let r = &cfg.scenario.rms;
    r.freqs_hz
        .iter()
        .map(|&f0| {
            let f = snap_frequency(f0, cfg.scenario.ts);
            let mut sc = cfg.scenario(case, SignalSpec::triangle(f, r.amplitude))?;
            sc.settle_periods = r.settle_periods;
            let n = samples_per_period(f, sc.ts).expect("snapped");
            sc.duration_s = (sc.settle_samples() + r.analysis_periods * n) as f64 * sc.ts;
            let tr = run_closed_loop(&sc).map_err(&ctx)?;
            Ok((f, rms_error(&tr, r.delay_samples)))
        })
        .collect()
}

fn rms_table(cfg: &CaseConfig, case: &BuiltCase, art: &mut Artifacts) -> Result<String, CliError> {
    let rows = rms_rows(cfg, case)?;
    let mut w = art.create("rms.csv")?;
    writeln!(w, "freq_hz,rms_error,rms_percent")?;
    let amp = cfg.scenario.rms.amplitude;
    let mut out = format!("{}: triangle RMS error (amplitude {amp})", case.name);
    for (f, e) in &rows {
        writeln!(w, "{f},{e},{}", 100.0 * e / amp)?;
        write!(out, "\n  {f:8.3} Hz  {e:.6}  ({:.3}%)", 100.0 * e / amp).ok();
    }
    w.flush()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spec_parses() {
        assert_eq!(parse_grid("10:1000:5"), Ok((10.0, 1000.0, 5)));
        assert_eq!(parse_grid("0.5:2e3:20"), Ok((0.5, 2000.0, 20)));
    }

    #[test]
    fn grid_spec_rejects_bad_input() {
        for s in ["10:1000", "a:10:5", "100:10:5", "0:10:5", "1:10:0", "1:10:5:5"] {
            assert!(parse_grid(s).is_err(), "{s}");
        }
    }

    #[test]
    fn baseline_summary_has_margins() {
        let cfg = crate::load_preset(1).unwrap();
        let case = cfg.build(&crate::presets_dir()).unwrap();
        let s = loop_summary(&case, &log_grid(1.0, 10_000.0, 50)).unwrap();
        assert!(s.margins.phase_margin_deg > 45.0);
        assert!(s.bandwidth_hz > s.margins.crossover_hz);
        assert!(summary_line("case1", &s).starts_with("case1: w_b = "));
    }
}
