//! Command-line front end.
//!
//! ```text
//! tripletsim simulate --config PATH|NAME --out DIR [--set section.key=value]...
//! tripletsim analyze  --tags DIR --out DIR [--bin-width-ps N] [--range-ps MIN:MAX]
//! tripletsim budget   --config PATH|NAME [--set ...]
//! tripletsim sweep    --config PATH|NAME --param NAME --grid v1,v2,... --out CSV [--simulate]
//! tripletsim report   --run DIR
//! ```
//!
//! `--config` accepts a file path or the name of a bundled config. `--set`
//! overrides are applied after the file, in order, so the last one wins.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::{analyze, Analysis};
use crate::budget::{expected_rates, RateBudget};
use crate::config::{bundled, parse_range, ExperimentConfig, KvDoc, RunMode};
use crate::detector::DetectorParams;
use crate::error::{Error, Result};
use crate::pipeline::{simulate, ClickStreams};
use crate::timetag::{read_tags, write_tags, TagStream};

pub const MANIFEST: &str = "manifest.txt";
pub const SWEEP_PARAMS: &[&str] = &[
    "two_photon_detuning_mhz",
    "cell_temperature_c",
    "coherent_pump_rate_hz",
    "pump1_detuning_ghz",
];

#[derive(Debug, Parser)]
#[command(name = "tripletsim", version, about = "Photon time-tag simulation and correlation analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a run and write one .ttag file per channel plus a manifest.
    Simulate {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "K=V")]
        set: Vec<String>,
    },
    /// Histogram and correlate the tag files of a run.
    Analyze {
        #[arg(long)]
        tags: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bin_width_ps: Option<u64>,
        #[arg(long, value_name = "MIN:MAX", allow_hyphen_values = true)]
        range_ps: Option<String>,
    },
    /// Print the analytic rate budget.
    Budget {
        #[arg(long)]
        config: String,
        #[arg(long = "set", value_name = "K=V")]
        set: Vec<String>,
    },
    /// Evaluate a parameter grid and write one CSV row per point.
    Sweep {
        #[arg(long)]
        config: String,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Simulate and analyze every point instead of using the budget only.
        #[arg(long)]
        simulate: bool,
        #[arg(long = "set", value_name = "K=V")]
        set: Vec<String>,
    },
    /// Summarize a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

/// Parses arguments (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                write!(out, "{}", e.render())?;
                return Ok(());
            }
            return Err(Error::Usage(e.render().to_string()));
        }
    };
    match cli.command {
        Command::Simulate { config, out: dir, set } => {
            let cfg = load_config(&config, &set)?;
            let streams = simulate(&cfg)?;
            write_run(&cfg, &streams, &dir)?;
            for (ch, s) in &streams {
                writeln!(out, "ch{ch}: {} clicks", s.len())?;
            }
        }
        Command::Analyze {
            tags,
            out: dir,
            bin_width_ps,
            range_ps,
        } => {
            let (mut cfg, streams) = read_run(&tags)?;
            if let Some(w) = bin_width_ps {
                cfg.analysis.bin_width_ps = w;
            }
            if let Some(r) = range_ps {
                let r = parse_range("range_ps", &r)?;
                cfg.analysis.pair_range_ps = r;
                cfg.analysis.s3s4_range_ps = r;
            }
            let a = analyze(&cfg, &streams)?;
            a.write_to(&dir)?;
            let src = tags.join(MANIFEST);
            let dst = dir.join(MANIFEST);
            if src.exists() && !dst.exists() {
                fs::copy(&src, &dst).map_err(|e| Error::io_at(&dst, e))?;
            }
            out.write_all(a.correlations_text().as_bytes())?;
            out.write_all(a.cs_text().as_bytes())?;
        }
        Command::Budget { config, set } => {
            let cfg = load_config(&config, &set)?;
            let b = expected_rates(&cfg)?;
            out.write_all(b.to_kv(cfg.run.duration_ps).as_bytes())?;
        }
        Command::Sweep {
            config,
            param,
            grid,
            out: path,
            simulate,
            set,
        } => {
            let cfg = load_config(&config, &set)?;
            let grid = parse_grid(&grid)?;
            let csv = sweep(&cfg, &param, &grid, simulate)?;
            fs::write(&path, &csv).map_err(|e| Error::io_at(&path, e))?;
            writeln!(out, "{} rows written to {}", grid.len(), path.display())?;
        }
        Command::Report { run } => {
            let text = report(&run, out)?;
            out.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

/// Reads a config from a path, falling back to the bundled config of that name.
pub fn load_config(source: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let path = Path::new(source);
    let text = if path.exists() {
        fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?
    } else if let Some(t) = bundled(source) {
        t.to_string()
    } else {
        return Err(Error::io_at(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or bundled config"),
        ));
    };
    ExperimentConfig::parse_with_overrides(&text, overrides)
}

pub fn manifest_text(cfg: &ExperimentConfig, streams: &ClickStreams) -> String {
    let mut s = String::from("[manifest]\n");
    let _ = writeln!(s, "tool = {}", env!("CARGO_PKG_NAME"));
    let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "mode = {}", cfg.run.mode.as_str());
    let _ = writeln!(s, "seed = {}", cfg.run.seed);
    let _ = writeln!(s, "duration_ps = {}", cfg.run.duration_ps);
    for (ch, t) in streams {
        let _ = writeln!(s, "count.ch{ch} = {}", t.len());
    }
    s.push('\n');
    s.push_str(&cfg.to_text());
    s
}

/// Writes `ch<N>.ttag` per channel and the manifest.
pub fn write_run(cfg: &ExperimentConfig, streams: &ClickStreams, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io_at(dir, e))?;
    for (ch, s) in streams {
        let p = dir.join(format!("ch{ch}.ttag"));
        let f = fs::File::create(&p).map_err(|e| Error::io_at(&p, e))?;
        write_tags(s, BufWriter::new(f)).map_err(|e| with_path(e, &p))?;
    }
    let p = dir.join(MANIFEST);
    fs::write(&p, manifest_text(cfg, streams)).map_err(|e| Error::io_at(&p, e))
}

fn with_path(e: Error, p: &Path) -> Error {
    match e {
        Error::Format { offset, msg } => Error::Format {
            offset,
            msg: format!("{}: {msg}", p.display()),
        },
        Error::Io { path: None, source } => Error::io_at(p, source),
        e => e,
    }
}

/// Parses a manifest back into the config it echoes.
pub fn read_manifest(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    let doc = KvDoc::parse(&text)?;
    let cfg = ExperimentConfig::from_doc(&doc, &["manifest"])?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads every `ch<N>.ttag` of a directory. Without a manifest the run mode
/// is inferred from the channel set and detectors take default parameters.
pub fn read_run(dir: &Path) -> Result<(ExperimentConfig, ClickStreams)> {
    let mut streams = ClickStreams::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io_at(dir, e))?;
    for e in entries {
        let e = e.map_err(|e| Error::io_at(dir, e))?;
        let name = e.file_name().to_string_lossy().into_owned();
        let Some(ch) = name
            .strip_prefix("ch")
            .and_then(|n| n.strip_suffix(".ttag"))
            .and_then(|n| n.parse::<u8>().ok())
        else {
            continue;
        };
        let p = e.path();
        let f = fs::File::open(&p).map_err(|e| Error::io_at(&p, e))?;
        let s: TagStream = read_tags(BufReader::new(f)).map_err(|e| with_path(e, &p))?;
        streams.insert(ch, s);
    }
    if streams.is_empty() {
        return Err(Error::Missing(format!("missing: tag files in {}", dir.display())));
    }
    let manifest = dir.join(MANIFEST);
    let cfg = if manifest.exists() {
        read_manifest(&manifest)?
    } else {
        let chans: Vec<u8> = streams.keys().copied().collect();
        let mode = [RunMode::Pair, RunMode::S3S4, RunMode::Triplet]
            .into_iter()
            .find(|m| m.channels() == chans.as_slice())
            .ok_or_else(|| Error::config_msg(format!("no run mode uses channels {chans:?}")))?;
        let mut c = ExperimentConfig::default();
        c.run.mode = mode;
        for ch in chans {
            c.detectors.insert(ch, DetectorParams::default());
        }
        c
    };
    Ok((cfg, streams))
}

fn parse_grid(items: &[String]) -> Result<Vec<f64>> {
    items
        .iter()
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("grid value `{v}` is not a number")))
        })
        .collect()
}

fn param_section(param: &str) -> Result<&'static str> {
    match param {
        "coherent_pump_rate_hz" => Ok("spdc"),
        p if SWEEP_PARAMS.contains(&p) => Ok("source"),
        _ => Err(Error::Usage(format!(
            "cannot sweep `{param}`; valid parameters: {}",
            SWEEP_PARAMS.join(", ")
        ))),
    }
}

const SWEEP_COLUMNS: &[&str] = &[
    "pair_rate_hz",
    "anchor_singles_hz",
    "coincidence_window_ps",
    "pair_delay_offset_ps",
    "s1_singles_hz",
    "s2_singles_hz",
    "s3_singles_hz",
    "s4_singles_hz",
    "s3s4_pairs_detected_hz",
    "triples_detected_hz",
    "g2_auto",
    "g2_auto_sigma",
    "g2_cross",
    "g2_cross_sigma",
    "g2_cross_delay_ps",
];

fn auto_and_cross(mode: RunMode) -> (Option<&'static str>, Option<&'static str>) {
    match mode {
        RunMode::Pair => (Some("g11"), Some("g12")),
        RunMode::S3S4 => (None, Some("g34")),
        RunMode::Triplet => (Some("g11"), Some("g3")),
        RunMode::Coherent => (Some("g33"), None),
    }
}

fn sweep_row(cfg: &ExperimentConfig, b: &RateBudget, a: Option<&Analysis>) -> Result<Vec<String>> {
    let mut row = Vec::with_capacity(SWEEP_COLUMNS.len());
    let num = |x: f64| x.to_string();
    if cfg.run.mode.uses_srs() {
        let p = cfg.source.resolve()?;
        let anchor = cfg
            .source
            .rate_model()?
            .detected_singles_hz(p.two_photon_detuning_mhz, p.pump1_power_mw)?;
        row.extend([num(p.pair_rate_hz), num(anchor), num(p.correlation_time_ps), num(p.pair_delay_offset_ps)]);
    } else {
        row.extend(std::iter::repeat_n(String::new(), 4));
    }
    row.extend(
        [
            b.s1_singles_detected_hz,
            b.s2_singles_detected_hz,
            b.s3_singles_detected_hz,
            b.s4_singles_detected_hz,
            b.s3s4_pairs_detected_hz,
            b.triples_detected_hz,
        ]
        .map(num),
    );
    let (auto, cross) = auto_and_cross(cfg.run.mode);
    let get = |name: Option<&str>| a.and_then(|a| name.and_then(|n| a.correlation(n)));
    match get(auto) {
        Some(c) => row.extend([num(c.value), num(c.stat_sigma)]),
        None => row.extend([String::new(), String::new()]),
    }
    match get(cross) {
        Some(c) => row.extend([num(c.value), num(c.stat_sigma), c.delay_ps.to_string()]),
        None => row.extend([String::new(), String::new(), String::new()]),
    }
    Ok(row)
}

/// Evaluates each grid point and returns the CSV text, one row per point.
/// With `simulate`, every point is simulated and analyzed with the config seed.
pub fn sweep(cfg: &ExperimentConfig, param: &str, grid: &[f64], simulate_points: bool) -> Result<String> {
    let section = param_section(param)?;
    let points: Vec<ExperimentConfig> = grid
        .iter()
        .map(|v| {
            let mut c = cfg.clone();
            c.clear_derived_override(param);
            c.set(section, param, &v.to_string())?;
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<String>> = points
        .par_iter()
        .map(|c| {
            let b = expected_rates(c)?;
            let a = if simulate_points {
                Some(analyze(c, &simulate(c)?)?)
            } else {
                None
            };
            sweep_row(c, &b, a.as_ref())
        })
        .collect::<Result<_>>()?;
    let mut s = format!("{param},{}\n", SWEEP_COLUMNS.join(","));
    for (v, row) in grid.iter().zip(rows) {
        let _ = writeln!(s, "{v},{}", row.join(","));
    }
    Ok(s)
}

fn read_kv(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

/// Builds the text summary of a run directory. Missing artifacts are listed
/// on `out` as `missing: <what>` lines and produce an error.
pub fn report(dir: &Path, out: &mut dyn Write) -> Result<String> {
    let mut missing = Vec::new();
    for (what, file) in [("manifest", MANIFEST), ("correlations", "correlations.txt"), ("cs reports", "cs.csv")] {
        if !dir.join(file).exists() {
            missing.push(what);
        }
    }
    let hists: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(rd) => {
            let mut v: Vec<PathBuf> = rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("hist_") && n.ends_with(".csv"))
                })
                .collect();
            v.sort();
            v
        }
        Err(e) => return Err(Error::io_at(dir, e)),
    };
    if hists.is_empty() {
        missing.push("histograms");
    }
    if !missing.is_empty() {
        for m in &missing {
            writeln!(out, "missing: {m}")?;
        }
        return Err(Error::Missing(format!("missing: {}", missing.join(", "))));
    }

    let cfg = read_manifest(&dir.join(MANIFEST))?;
    let kv = read_kv(&dir.join("correlations.txt"))?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "run: mode {}, seed {}, duration {} s",
        cfg.run.mode.as_str(),
        cfg.run.seed,
        cfg.run.duration_ps as f64 * 1e-12
    );
    let _ = writeln!(s, "\nsingles (measured vs budget):");
    let budget = expected_rates(&cfg)?;
    let expected: BTreeMap<u8, f64> = [
        (0u8, budget.s1_singles_detected_hz),
        (1, budget.s2_singles_detected_hz),
        (2, budget.s3_singles_detected_hz),
        (3, budget.s4_singles_detected_hz),
    ]
    .into();
    for &ch in cfg.run.mode.channels() {
        let Some(n) = kv.get(&format!("singles.ch{ch}")).and_then(|v| v.parse::<f64>().ok()) else {
            continue;
        };
        let e = RateBudget::count(expected[&ch], cfg.run.duration_ps);
        let pull = if e > 0.0 { (n - e) / e.sqrt() } else { 0.0 };
        let _ = writeln!(s, "  ch{ch}: {n} clicks, expected {e:.1}, pull {pull:+.2}");
    }
    let _ = writeln!(s, "\ncorrelations:");
    for (name, v) in &kv {
        if let Some(g) = name.strip_suffix(".value").filter(|g| !g.starts_with("snr.")) {
            let sigma = kv.get(&format!("{g}.sigma")).map_or("?", |x| x.as_str());
            let delay = kv.get(&format!("{g}.delay_ps")).map_or("?", |x| x.as_str());
            let _ = writeln!(s, "  {g} = {v} ± {sigma} at {delay} ps");
        }
    }
    let snrs: Vec<_> = kv
        .iter()
        .filter_map(|(k, v)| Some((k.strip_prefix("snr.")?.strip_suffix(".value")?, v)))
        .collect();
    if !snrs.is_empty() {
        let _ = writeln!(s, "\nsignal-to-noise:");
        for (name, v) in snrs {
            let _ = writeln!(s, "  {name}: {v}");
        }
    }
    let cs = fs::read_to_string(dir.join("cs.csv")).map_err(|e| Error::io_at(dir.join("cs.csv"), e))?;
    let _ = writeln!(s, "\nCauchy-Schwarz:");
    let mut any = false;
    for line in cs.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let [label, _kind, value, sigma, k, violated] = f[..] else {
            return Err(Error::format(0, format!("cs.csv: bad row `{line}`")));
        };
        let verdict = if violated == "true" { "yes" } else { "no" };
        let _ = writeln!(s, "  {label} = {value} ± {sigma}");
        let _ = writeln!(s, "  {label} > 1 at k={k}: {verdict}");
        any = true;
    }
    if !any {
        let _ = writeln!(s, "  none for this run mode");
    }
    let _ = writeln!(s, "\nhistograms:");
    for h in hists {
        let _ = writeln!(s, "  {}", h.file_name().unwrap().to_string_lossy());
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_sweep_parameter_lists_valid_names() {
        let cfg = crate::config::bundled_config("paper_pair_stage").unwrap();
        let e = sweep(&cfg, "pump2_power_mw", &[1.0], false).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("cell_temperature_c"));
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        let mut sink = Vec::new();
        let e = run(["tripletsim", "simulate", "--bogus"], &mut sink).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn missing_config_is_io_error() {
        let e = load_config("/nonexistent/x.cfg", &[]).unwrap_err();
        assert_eq!(e.exit_code(), 4);
    }
}
