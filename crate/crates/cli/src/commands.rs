use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use tkp_core::optics::{bell_table, hom_scan, truth_table, PpbsSpec};
use tkp_core::protocol::{
    calibrate_noise, decode, play_round, run_game, theoretical_table, BSchedule, DecodeResult, GameReport, KingSource,
    NoiseModel, RandomKing, RoundRecord, Scenario, ScriptedKing, TrialPlan, TrialStats,
};
use tkp_core::{BasisLabel, BellState, Coincidence, EntangledLabel, Outcome, PrimeDim};

use crate::config::ConfigFile;
use crate::report::*;
use crate::{parse, Cli, CliError, Command, Env, OutputArgs, ScenarioArgs};

const DEFAULT_SHOTS: u64 = 10_000;
const DEFAULT_SHOTS_PER_ROUND: u64 = 200;
const DEFAULT_ROUNDS: usize = 20;

/// Scenario settings after merging the config file with flags.
#[derive(Debug, Clone)]
struct Resolved {
    d: PrimeDim,
    initial: EntangledLabel,
    noise: Vec<NoiseModel>,
    seed: Option<u64>,
    file: ConfigFile,
    format: Option<Format>,
    out: Option<PathBuf>,
    verbose: u8,
}

impl Resolved {
    fn new(scenario: &ScenarioArgs, output: &OutputArgs, verbose: u8) -> Result<Self, CliError> {
        let file = match &scenario.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let d = parse::dim(scenario.d.or(file.d).unwrap_or(2))?;
        let initial_text = scenario
            .initial
            .clone()
            .or_else(|| file.initial.as_ref().map(|i| i.to_text()))
            .unwrap_or_else(|| if d.get() == 2 { "phi+".into() } else { "0,0,0".into() });
        let initial = parse::initial(&initial_text, d)?;
        let noise_texts = if scenario.noise.is_empty() {
            file.noise.as_ref().map(|n| n.to_texts()).unwrap_or_default()
        } else {
            scenario.noise.clone()
        };
        let noise = noise_texts.iter().map(|t| parse::noise(t)).collect::<Result<_, _>>()?;
        let format = match (output.format, &file.format) {
            (Some(f), _) => Some(f),
            (None, Some(f)) => Some(f.parse()?),
            (None, None) => None,
        };
        Ok(Self {
            d,
            initial,
            noise,
            seed: scenario.seed.or(file.seed),
            out: output.out.clone().or_else(|| file.out.clone()),
            verbose: verbose.max(file.verbose.unwrap_or(0)),
            format,
            file,
        })
    }

    fn output_only(output: &OutputArgs, verbose: u8) -> Self {
        Self {
            d: PrimeDim::QUBIT,
            initial: BellState::PhiPlus.label(),
            noise: Vec::new(),
            seed: None,
            file: ConfigFile::default(),
            format: output.format,
            out: output.out.clone(),
            verbose,
        }
    }

    fn format(&self) -> Format {
        self.format.unwrap_or(Format::Csv)
    }

    fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Usage("a --seed is required so runs are reproducible".into()))
    }
}

fn emit(bytes: &[u8], out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => Ok(stdout.write_all(bytes)?),
    }
}

fn label_json(l: EntangledLabel) -> LabelJson {
    LabelJson { c: l.c, r: l.r, s: l.s }
}

fn coincidence_label(d: PrimeDim, o: Outcome) -> String {
    if d.get() != 2 {
        return String::new();
    }
    BellState::from_outcome(o)
        .map(|b| b.coincidence().name().to_string())
        .unwrap_or_default()
}

fn verdict_name(v: DecodeResult, d: PrimeDim) -> String {
    match v {
        DecodeResult::Conclusive(b) => parse::basis_name(b, d),
        DecodeResult::Inconclusive => "inconclusive".into(),
    }
}

fn schedule_name(s: &BSchedule, d: PrimeDim) -> String {
    match s {
        BSchedule::UniformRandom => "random".into(),
        BSchedule::Each(list) => list.iter().map(|&b| parse::basis_name(b, d)).collect::<Vec<_>>().join(","),
    }
}

pub(crate) fn dispatch(
    cli: Cli,
    env: Env,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Table { scenario, output } => table(&Resolved::new(&scenario, &output, verbose)?, stdout),
        Command::Trials {
            scenario,
            shots,
            b_list,
            output,
        } => {
            let r = Resolved::new(&scenario, &output, verbose)?;
            let shots = shots.or(r.file.shots).unwrap_or(DEFAULT_SHOTS);
            let schedule = b_list.or_else(|| r.file.b_schedule.clone());
            trials(&r, shots, schedule.as_deref(), stdout, stderr)
        }
        Command::Calibrate {
            scenario,
            target,
            family,
            output,
        } => calibrate(&Resolved::new(&scenario, &output, verbose)?, target, &family, stdout),
        Command::Hom {
            m0,
            width,
            points,
            span,
            output,
        } => hom(&Resolved::output_only(&output, verbose), m0, width, points, span, stdout),
        Command::TruthTable { mode_match, output } => {
            truth(&Resolved::output_only(&output, verbose), mode_match, stdout)
        }
        Command::BellTable { mode_match, output } => bell(&Resolved::output_only(&output, verbose), mode_match, stdout),
        Command::Game {
            scenario,
            rounds,
            shots_per_round,
            b_list,
            interactive,
            output,
        } => {
            let r = Resolved::new(&scenario, &output, verbose)?;
            let opts = GameOptions {
                rounds: rounds.or(r.file.rounds),
                shots_per_round: shots_per_round.or(r.file.shots_per_round).unwrap_or(DEFAULT_SHOTS_PER_ROUND),
                b_list: if interactive { None } else { b_list.or_else(|| r.file.b_schedule.clone()) },
                interactive,
            };
            game(&r, opts, env, stdin, stdout, stderr)
        }
    }
}

pub fn table_rows(d: PrimeDim, initial: EntangledLabel) -> Result<Vec<TableRow>, CliError> {
    let table = theoretical_table(d, initial)?;
    let mut rows = Vec::with_capacity(table.rows.len() * d.as_usize() * d.as_usize());
    for (b, dist) in &table.rows {
        for (o, p) in dist.iter() {
            rows.push(TableRow {
                d: d.get(),
                initial_c: initial.c,
                initial_r: initial.r,
                initial_s: initial.s,
                b: parse::basis_name(*b, d),
                outcome_c: o.c,
                outcome_r: o.r,
                coincidence_label: coincidence_label(d, o),
                probability: p,
            });
        }
    }
    Ok(rows)
}

fn table(r: &Resolved, stdout: &mut dyn Write) -> Result<(), CliError> {
    let rows = table_rows(r.d, r.initial)?;
    let bytes = match r.format() {
        Format::Csv => {
            let rounded: Vec<TableRow> = rows
                .into_iter()
                .map(|row| TableRow {
                    probability: round12(row.probability),
                    ..row
                })
                .collect();
            csv_bytes(&rounded)?
        }
        Format::Json => json_bytes(
            "table",
            TableJson {
                d: r.d.get(),
                initial: label_json(r.initial),
                rows,
            },
        )?,
    };
    emit(&bytes, r.out.as_deref(), stdout)
}

fn trials_rows(stats: &TrialStats, d: PrimeDim, initial: EntangledLabel) -> Result<Vec<TrialsRow>, CliError> {
    let blank = TrialsRow {
        section: String::new(),
        name: String::new(),
        b: String::new(),
        outcome_c: None,
        outcome_r: None,
        coincidence_label: String::new(),
        decoded: String::new(),
        count: None,
        value: None,
    };
    let mut rows = vec![TrialsRow {
        section: "metric".into(),
        name: "total_events".into(),
        count: Some(stats.total_events),
        ..blank.clone()
    }];
    for (name, value) in [
        ("conclusive_rate", stats.conclusive_rate),
        ("reliability_expected_mass", stats.reliability_expected_mass),
        ("reliability_conclusive_accuracy", stats.reliability_conclusive_accuracy),
    ] {
        rows.push(TrialsRow {
            section: "metric".into(),
            name: name.into(),
            value: Some(round12(value)),
            ..blank.clone()
        });
    }
    let per_basis = |b: BasisLabel| stats.counts.iter().filter(|e| e.b_true == b).map(|e| e.count).sum::<u64>();
    let frac = |n: u64, total: u64| round12(if total == 0 { 0.0 } else { n as f64 / total as f64 });
    for e in &stats.counts {
        rows.push(TrialsRow {
            section: "count".into(),
            b: parse::basis_name(e.b_true, d),
            outcome_c: Some(e.outcome.c),
            outcome_r: Some(e.outcome.r),
            coincidence_label: coincidence_label(d, e.outcome),
            decoded: verdict_name(decode(initial, e.outcome, d)?, d),
            count: Some(e.count),
            value: Some(frac(e.count, per_basis(e.b_true))),
            ..blank.clone()
        });
    }
    for e in &stats.confusion {
        rows.push(TrialsRow {
            section: "confusion".into(),
            b: parse::basis_name(e.b_true, d),
            decoded: verdict_name(e.decoded, d),
            count: Some(e.count),
            value: Some(frac(e.count, per_basis(e.b_true))),
            ..blank.clone()
        });
    }
    for (k, rec) in stats.records.iter().enumerate() {
        rows.push(TrialsRow {
            section: "record".into(),
            name: k.to_string(),
            b: parse::basis_name(rec.b_true, d),
            outcome_c: Some(rec.outcome.c),
            outcome_r: Some(rec.outcome.r),
            coincidence_label: coincidence_label(d, rec.outcome),
            decoded: verdict_name(rec.decoded, d),
            ..blank.clone()
        });
    }
    Ok(rows)
}

/// Runs the shards in parallel; the merge is order-independent.
pub fn run_trials_parallel(scenario: &Scenario, schedule: &BSchedule) -> Result<TrialStats, CliError> {
    let plan = TrialPlan::new(scenario.clone(), schedule.clone())?;
    let tallies: Vec<_> = plan.shards().par_iter().map(|s| (s.ordinal, plan.run_shard(s))).collect();
    Ok(plan.finish(tallies))
}

fn trials(
    r: &Resolved,
    shots: u64,
    schedule: Option<&str>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let seed = r.require_seed()?;
    if shots == 0 {
        return Err(CliError::Usage("shots must be at least 1".into()));
    }
    let schedule = parse::schedule(schedule.unwrap_or("all"), r.d)?;
    let scenario = Scenario {
        d: r.d,
        initial: r.initial,
        noise: r.noise.clone(),
        shots,
        seed,
    };
    if r.verbose > 0 {
        let noise: Vec<String> = r.noise.iter().map(|n| n.to_string()).collect();
        writeln!(
            stderr,
            "trials: d={} initial={} noise=[{}] shots={} seed={} b={}",
            r.d,
            parse::format_initial(r.initial),
            noise.join(" "),
            shots,
            seed,
            schedule_name(&schedule, r.d)
        )?;
    }
    let stats = run_trials_parallel(&scenario, &schedule)?;
    let bytes = match r.format() {
        Format::Csv => csv_bytes(&trials_rows(&stats, r.d, r.initial)?)?,
        Format::Json => json_bytes(
            "trials",
            TrialsJson {
                scenario: ScenarioJson {
                    d: r.d.get(),
                    initial: label_json(r.initial),
                    noise: r.noise.clone(),
                    shots,
                    seed,
                    b_schedule: schedule_name(&schedule, r.d),
                },
                stats,
            },
        )?,
    };
    emit(&bytes, r.out.as_deref(), stdout)
}

fn calibrate(r: &Resolved, target: f64, family: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    let fam = parse::family(family)?;
    if !target.is_finite() {
        return Err(CliError::Usage(format!("target {target} is not a number")));
    }
    let cal = calibrate_noise(target, fam, r.d, r.initial)?;
    let row = CalibrationRow {
        d: r.d.get(),
        initial: parse::format_initial(r.initial),
        family: parse::family_name(fam).into(),
        target,
        parameter: cal.parameter,
        achieved: cal.achieved,
    };
    let bytes = match r.format() {
        Format::Csv => csv_bytes(&[row.rounded()])?,
        Format::Json => json_bytes("calibrate", CalibrationJson { row, calibration: cal })?,
    };
    emit(&bytes, r.out.as_deref(), stdout)
}

fn hom(r: &Resolved, m0: f64, width: f64, points: usize, span: f64, stdout: &mut dyn Write) -> Result<(), CliError> {
    if points < 3 {
        return Err(CliError::Usage("hom needs at least 3 points".into()));
    }
    if !(span > 0.0 && span.is_finite()) {
        return Err(CliError::Usage(format!("span {span} must be positive")));
    }
    let half = span * width;
    let delays: Vec<f64> = (0..points)
        .map(|k| -half + 2.0 * half * k as f64 / (points - 1) as f64)
        .collect();
    let curve = hom_scan(&delays, m0, width, &PpbsSpec::INTERFERING)?;
    let bytes = match r.format() {
        Format::Csv => {
            let mut rows: Vec<HomRow> = curve
                .delays
                .iter()
                .zip(&curve.coincidences)
                .map(|(&t, &c)| HomRow {
                    kind: "point".into(),
                    delay: Some(round12(t)),
                    coincidence: Some(round12(c)),
                    visibility: None,
                })
                .collect();
            rows.push(HomRow {
                kind: "summary".into(),
                delay: None,
                coincidence: None,
                visibility: Some(round12(curve.visibility)),
            });
            csv_bytes(&rows)?
        }
        Format::Json => json_bytes(
            "hom",
            HomJson {
                m0,
                width,
                delays: curve.delays,
                coincidences: curve.coincidences,
                visibility: curve.visibility,
            },
        )?,
    };
    emit(&bytes, r.out.as_deref(), stdout)
}

const TWO_QUBIT_LABELS: [&str; 4] = ["HH", "HV", "VH", "VV"];

fn truth(r: &Resolved, m: f64, stdout: &mut dyn Write) -> Result<(), CliError> {
    let t = truth_table(m)?;
    let bytes = match r.format() {
        Format::Csv => {
            let mut rows = Vec::new();
            let row = |kind: &str, input: &str, output: &str, value: f64| TruthTableRow {
                mode_match: m,
                kind: kind.into(),
                input: input.into(),
                output: output.into(),
                value: round12(value),
            };
            for (i, input) in TWO_QUBIT_LABELS.iter().enumerate() {
                for (o, output) in TWO_QUBIT_LABELS.iter().enumerate() {
                    rows.push(row("cell", input, output, t.probabilities[i][o]));
                }
            }
            for (i, input) in TWO_QUBIT_LABELS.iter().enumerate() {
                rows.push(row("success", input, "", t.success[i]));
            }
            rows.push(row("average_fidelity", "", "", t.average_fidelity));
            csv_bytes(&rows)?
        }
        Format::Json => json_bytes(
            "truth-table",
            TruthTableJson {
                mode_match: m,
                labels: TWO_QUBIT_LABELS.iter().map(|s| s.to_string()).collect(),
                probabilities: t.probabilities.iter().map(|row| row.to_vec()).collect(),
                success: t.success.to_vec(),
                average_fidelity: t.average_fidelity,
            },
        )?,
    };
    emit(&bytes, r.out.as_deref(), stdout)
}

fn bell(r: &Resolved, m: f64, stdout: &mut dyn Write) -> Result<(), CliError> {
    let table = bell_table(m)?;
    let csv = r.format() == Format::Csv;
    let mut rows = Vec::new();
    for (state, probs) in table {
        for (c, p) in Coincidence::ALL.iter().zip(probs) {
            rows.push(BellTableRow {
                mode_match: m,
                bell: state.name().into(),
                coincidence: c.name().into(),
                probability: if csv { round12(p) } else { p },
            });
        }
    }
    let bytes = if csv {
        csv_bytes(&rows)?
    } else {
        json_bytes("bell-table", BellTableJson { mode_match: m, rows })?
    };
    emit(&bytes, r.out.as_deref(), stdout)
}

struct GameOptions {
    rounds: Option<usize>,
    shots_per_round: u64,
    b_list: Option<String>,
    interactive: bool,
}

fn transcript_line(rec: &RoundRecord, d: PrimeDim) -> String {
    format!(
        "round {}: king {}, alice {} (confidence {:.3}) {}",
        rec.round + 1,
        parse::basis_name(rec.b_true, d),
        verdict_name(rec.guess, d),
        rec.confidence,
        if rec.hit() { "hit" } else { "miss" }
    )
}

fn basis_choices(d: PrimeDim) -> String {
    d.basis_labels()
        .into_iter()
        .map(|b| parse::basis_name(b, d))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Prompts for each round on `input`; malformed answers are asked again.
fn interactive_rounds(
    scenario: &Scenario,
    rounds: usize,
    shots: u64,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<Vec<RoundRecord>, CliError> {
    let d = scenario.d;
    let mut records = Vec::new();
    'rounds: for round in 0..rounds {
        let b = loop {
            write!(out, "round {}/{} - King, choose a basis ({}): ", round + 1, rounds, basis_choices(d))?;
            out.flush()?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                writeln!(out)?;
                writeln!(out, "input closed after {round} rounds")?;
                break 'rounds;
            }
            if line.trim().is_empty() {
                continue;
            }
            match parse::basis(&line, d) {
                Ok(b) => break b,
                Err(e) => writeln!(out, "  {e}; try again")?,
            }
        };
        let rec = play_round(scenario, round, b, shots)?;
        writeln!(out, "{}", transcript_line(&rec, d))?;
        records.push(rec);
    }
    Ok(records)
}

fn game(
    r: &Resolved,
    opts: GameOptions,
    env: Env,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let seed = r.require_seed()?;
    if opts.shots_per_round == 0 {
        return Err(CliError::Usage("shots per round must be at least 1".into()));
    }
    if opts.rounds == Some(0) {
        return Err(CliError::Usage("rounds must be at least 1".into()));
    }
    let scenario = Scenario {
        d: r.d,
        initial: r.initial,
        noise: r.noise.clone(),
        shots: opts.shots_per_round,
        seed,
    };
    // structured output replaces the transcript only when asked for on stdout
    let structured_to_stdout = r.out.is_none() && r.format.is_some();
    let mut transcript: Vec<u8> = Vec::new();
    let records = if opts.interactive {
        if !env.stdin_is_terminal {
            return Err(CliError::Usage("--interactive needs a terminal on stdin".into()));
        }
        let rounds = opts.rounds.unwrap_or(DEFAULT_ROUNDS);
        let records = interactive_rounds(&scenario, rounds, opts.shots_per_round, stdin, stdout)?;
        stdout.flush()?;
        records
    } else {
        let list = opts
            .b_list
            .as_deref()
            .ok_or_else(|| CliError::Usage("game needs --b-list (or --b-list random, or --interactive)".into()))?;
        let (mut king, rounds): (Box<dyn KingSource>, usize) = match parse::schedule(list, r.d)? {
            BSchedule::UniformRandom => (Box::new(RandomKing::new(seed)), opts.rounds.unwrap_or(DEFAULT_ROUNDS)),
            BSchedule::Each(list) => {
                let rounds = opts.rounds.unwrap_or(list.len());
                if rounds > list.len() {
                    return Err(CliError::Usage(format!(
                        "--b-list has {} entries but {rounds} rounds were requested",
                        list.len()
                    )));
                }
                (Box::new(ScriptedKing::new(list)), rounds)
            }
        };
        let d = r.d;
        let report = run_game(rounds, opts.shots_per_round, &scenario, king.as_mut(), |rec| {
            transcript.extend_from_slice(transcript_line(rec, d).as_bytes());
            transcript.push(b'\n');
        })?;
        report.rounds
    };
    let hits = records.iter().filter(|r| r.hit()).count();
    let played = records.len();
    let hit_rate = if played == 0 { 0.0 } else { hits as f64 / played as f64 };
    let summary = format!("hit rate: {hits}/{played} = {hit_rate:.3}\n");
    if r.verbose > 0 {
        writeln!(stderr, "game: seed={seed} shots/round={}", opts.shots_per_round)?;
    }
    let report = GameReport {
        rounds: records,
        hit_rate,
    };
    if !structured_to_stdout {
        transcript.extend_from_slice(summary.as_bytes());
        if opts.interactive {
            stdout.write_all(summary.as_bytes())?;
        } else {
            stdout.write_all(&transcript)?;
        }
    }
    if r.out.is_some() || structured_to_stdout {
        let bytes = match r.format() {
            Format::Csv => {
                let rows: Vec<GameRow> = report
                    .rounds
                    .iter()
                    .map(|rec| GameRow {
                        round: rec.round + 1,
                        b_true: parse::basis_name(rec.b_true, r.d),
                        guess: verdict_name(rec.guess, r.d),
                        confidence: round12(rec.confidence),
                        hit: rec.hit(),
                    })
                    .collect();
                csv_bytes(&rows)?
            }
            Format::Json => json_bytes(
                "game",
                GameJson {
                    rounds_played: played,
                    hits,
                    hit_rate,
                    report,
                },
            )?,
        };
        emit(&bytes, r.out.as_deref(), stdout)?;
    }
    Ok(())
}
