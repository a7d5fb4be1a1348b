//! Text forms of labels, bases and noise models.

use tkp_core::protocol::{BSchedule, NoiseFamily, NoiseModel};
use tkp_core::{BasisLabel, BellState, EntangledLabel, PrimeDim};

use crate::CliError;

pub fn dim(d: u32) -> Result<PrimeDim, CliError> {
    PrimeDim::new(d).map_err(|e| CliError::Usage(e.to_string()))
}

/// `c,r,s` or, for qubits, one of `phi+`, `phi-`, `psi+`, `psi-`.
pub fn initial(text: &str, d: PrimeDim) -> Result<EntangledLabel, CliError> {
    let text = text.trim();
    if let Some(bell) = BellState::from_name(&text.to_ascii_lowercase()) {
        if d.get() != 2 {
            return Err(CliError::Usage(format!("'{text}' names a qubit Bell state but d = {d}")));
        }
        return Ok(bell.label());
    }
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [c, r, s] = parts.as_slice() else {
        return Err(CliError::Usage(format!("initial label '{text}' is not c,r,s or a Bell state name")));
    };
    let num = |x: &str| {
        x.parse::<u32>()
            .map_err(|_| CliError::Usage(format!("'{x}' in initial label '{text}' is not a residue")))
    };
    EntangledLabel::new(d, num(c)?, num(r)?, num(s)?).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn format_initial(label: EntangledLabel) -> String {
    format!("{},{},{}", label.c, label.r, label.s)
}

/// `z`, `x`, `y` for qubits; `comp` or a residue `k` (the phase basis `k`) for any d.
pub fn basis(text: &str, d: PrimeDim) -> Result<BasisLabel, CliError> {
    let t = text.trim().to_ascii_lowercase();
    let label = match t.as_str() {
        "comp" | "computational" => BasisLabel::Computational,
        "z" | "x" | "y" if d.get() == 2 => match t.as_str() {
            "z" => BasisLabel::Computational,
            "x" => BasisLabel::Phase(0),
            _ => BasisLabel::Phase(1),
        },
        _ => match t.parse::<u32>() {
            Ok(k) => BasisLabel::Phase(k),
            Err(_) => return Err(CliError::Usage(format!("unknown basis '{}'", text.trim()))),
        },
    };
    label.validate(d).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn basis_name(b: BasisLabel, d: PrimeDim) -> String {
    if d.get() == 2 {
        if let Some(name) = b.pauli_name() {
            return name.to_string();
        }
    }
    match b {
        BasisLabel::Computational => "comp".to_string(),
        BasisLabel::Phase(k) => k.to_string(),
    }
}

/// Comma-separated bases, `all`, or `random`.
pub fn schedule(text: &str, d: PrimeDim) -> Result<BSchedule, CliError> {
    match text.trim().to_ascii_lowercase().as_str() {
        "all" => Ok(BSchedule::all_bases(d)),
        "random" => Ok(BSchedule::UniformRandom),
        _ => {
            let list = text
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| basis(s, d))
                .collect::<Result<Vec<_>, _>>()?;
            if list.is_empty() {
                return Err(CliError::Usage("empty basis list".into()));
            }
            Ok(BSchedule::Each(list))
        }
    }
}

pub fn family(text: &str) -> Result<NoiseFamily, CliError> {
    match text.trim().to_ascii_lowercase().as_str() {
        "werner" | "werner_shared" => Ok(NoiseFamily::WernerShared),
        "white" | "outcome_white_noise" => Ok(NoiseFamily::OutcomeWhiteNoise),
        "optics" | "optics_backend" => Ok(NoiseFamily::OpticsBackend),
        other => Err(CliError::Usage(format!("unknown noise family '{other}' (werner, white, optics)"))),
    }
}

pub fn family_name(f: NoiseFamily) -> &'static str {
    match f {
        NoiseFamily::WernerShared => "werner",
        NoiseFamily::OutcomeWhiteNoise => "white",
        NoiseFamily::OpticsBackend => "optics",
    }
}

/// `ideal` or `family:parameter`.
pub fn noise(text: &str) -> Result<NoiseModel, CliError> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("ideal") {
        return Ok(NoiseModel::Ideal);
    }
    let (name, value) = t
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("noise '{t}' is not ideal or family:parameter")))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("noise parameter '{value}' is not a number")))?;
    family(name)?
        .at(value)
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q: PrimeDim = PrimeDim::QUBIT;

    #[test]
    fn initial_forms() {
        assert_eq!(initial("phi+", Q).unwrap(), BellState::PhiPlus.label());
        assert_eq!(initial("PSI-", Q).unwrap(), BellState::PsiMinus.label());
        let d5 = dim(5).unwrap();
        assert_eq!(initial("1, 2,3", d5).unwrap(), EntangledLabel { c: 1, r: 2, s: 3 });
        assert!(initial("phi+", d5).is_err());
        assert!(initial("1,2", d5).is_err());
        assert!(initial("1,2,5", d5).is_err());
        assert!(initial("a,b,c", d5).is_err());
    }

    #[test]
    fn basis_names_round_trip() {
        for d in [2, 3, 11] {
            let d = dim(d).unwrap();
            for b in d.basis_labels() {
                assert_eq!(basis(&basis_name(b, d), d).unwrap(), b);
            }
        }
        assert!(basis("x", dim(3).unwrap()).is_err());
        assert!(basis("2", Q).is_err());
        assert!(basis("w", Q).is_err());
    }

    #[test]
    fn noise_forms() {
        assert_eq!(noise("ideal").unwrap(), NoiseModel::Ideal);
        assert_eq!(noise("white:0.374").unwrap(), NoiseModel::OutcomeWhiteNoise(0.374));
        assert_eq!(noise("werner_shared:1").unwrap(), NoiseModel::WernerShared(1.0));
        assert_eq!(noise("optics:0.829").unwrap(), NoiseModel::OpticsBackend(0.829));
        assert!(noise("white:1.5").is_err());
        assert!(noise("pink:0.1").is_err());
        assert!(noise("white").is_err());
    }

    #[test]
    fn schedules() {
        assert_eq!(schedule("random", Q).unwrap(), BSchedule::UniformRandom);
        assert_eq!(schedule("all", Q).unwrap(), BSchedule::all_bases(Q));
        assert_eq!(
            schedule("x,y,z", Q).unwrap(),
            BSchedule::Each(vec![BasisLabel::Phase(0), BasisLabel::Phase(1), BasisLabel::Computational])
        );
        assert!(schedule(",", Q).is_err());
    }
}
