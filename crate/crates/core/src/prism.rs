//! PRISM-language export of a built [`PomdpSpec`].
//!
//! The text is a pure function of the spec: constants, formulas, the Turn
//! module, one prediction module per skill with a guarded joint update
//! per profile, and the `"acceptance"` reward structure with one entry per
//! (profile, slot option, hidden skill vector). Steps run `0..S_total` and
//! `done` holds at `step = S_total`.

use alloc::string::String;
use core::fmt::Write;

use crate::pomdp::PomdpSpec;

/// The policy query answered by the solvers.
pub const ACCEPTANCE_QUERY: &str = "R{\"acceptance\"}max=? [ F done ]";

pub fn export_prism(spec: &PomdpSpec) -> String {
    let mut out = String::with_capacity(16 * 1024);
    // Writing to a String cannot fail.
    write_model(&mut out, spec).expect("fmt::Write for String");
    out
}

fn write_model(out: &mut String, spec: &PomdpSpec) -> core::fmt::Result {
    let k_count = spec.skill_count();
    let p_count = spec.slot_count();

    writeln!(out, "// Profile POMDP for explanation prompt synthesis.")?;
    writeln!(out, "// Query: {ACCEPTANCE_QUERY}")?;
    writeln!(out)?;
    writeln!(out, "pomdp")?;
    writeln!(out)?;
    write!(out, "observables\n  step")?;
    for k in 1..=k_count {
        write!(out, ", cogSkillPred_{k}")?;
    }
    writeln!(out, "\nendobservables")?;
    writeln!(out)?;

    writeln!(out, "const int N_profiles = {};", spec.profiles.len())?;
    writeln!(out, "const int profile = {};", spec.active)?;
    writeln!(out, "const int K = {k_count};")?;
    writeln!(out, "const int P = {p_count};")?;
    writeln!(out, "const int S_total = K+P+1;")?;
    for (k, skill) in spec.skills.iter().enumerate() {
        write!(out, "const int M_{} = {}; // {}:", k + 1, skill.level_count(), skill.name)?;
        for (i, level) in skill.levels.iter().enumerate() {
            write!(out, " {}={}", i + 1, level)?;
        }
        writeln!(out)?;
    }
    writeln!(out)?;
    writeln!(out, "formula done = step=S_total;")?;
    writeln!(out)?;

    let params = &spec.params;
    writeln!(out, "// Utility parameters and Beta prior")?;
    writeln!(out, "const double b_min = {};", params.b_min)?;
    writeln!(out, "const double b_max = {};", params.b_max)?;
    writeln!(out, "const double alpha = {};", params.alpha)?;
    writeln!(out, "const double kappa_match = {};", params.kappa_match)?;
    writeln!(out, "const double kappa_okay = {};", params.kappa_okay)?;
    writeln!(out, "const double kappa_mismatch = {};", params.kappa_mismatch)?;
    writeln!(out, "const double a0 = {};", spec.prior.a0)?;
    writeln!(out, "const double b0 = {};", spec.prior.b0)?;
    writeln!(out)?;

    writeln!(out, "// Feedback counts, acceptance estimates and utilities per (profile, slot, option)")?;
    for block in &spec.profiles {
        let n = block.profile;
        for (p, slot) in block.counts.iter().enumerate() {
            for (q, counts) in slot.iter().enumerate() {
                let id = alloc::format!("{}_{}_{}", n, p + 1, q + 1);
                writeln!(out, "const int R_acceptance_{id} = {};", counts.accepted)?;
                writeln!(out, "const int R_rejection_{id} = {};", counts.rejected)?;
                writeln!(
                    out,
                    "formula r_{id} = (R_acceptance_{id} + a0) / (R_acceptance_{id} + R_rejection_{id} + a0 + b0);"
                )?;
                for class in ["match", "okay", "mismatch"] {
                    writeln!(
                        out,
                        "formula utility_{id}_{class} = b_min + kappa_{class} * (b_max - b_min) * pow(r_{id}, alpha);"
                    )?;
                }
            }
        }
    }
    writeln!(out)?;

    writeln!(out, "module Turn")?;
    writeln!(out, "  step : [0..S_total] init 0;")?;
    writeln!(out)?;
    for k in 0..k_count {
        writeln!(out, "  [ObserveCogSkill_{}] step={} -> (step'={});", k + 1, k, k + 1)?;
    }
    for (p, slot) in spec.slots.iter().enumerate() {
        let step = k_count + p;
        for q in 1..=slot.options {
            writeln!(out, "  [SelectPrompt_{}_{}] step={} -> (step'={});", p + 1, q, step, step + 1)?;
        }
    }
    writeln!(out, "  [end] step={} -> (step'={});", k_count + p_count, k_count + p_count + 1)?;
    writeln!(out, "endmodule")?;
    writeln!(out)?;

    writeln!(out, "// P_n_k_LiLj = P(cogSkill_k=i, cogSkillPred_k=j | profile=n)")?;
    for block in &spec.profiles {
        for (k, table) in block.joint.iter().enumerate() {
            for (i, row) in table.iter().enumerate() {
                for (j, p) in row.iter().enumerate() {
                    writeln!(out, "const double P_{}_{}_L{}L{} = {};", block.profile, k + 1, i + 1, j + 1, p)?;
                }
            }
        }
    }
    writeln!(out)?;

    for (k, skill) in spec.skills.iter().enumerate() {
        let k1 = k + 1;
        writeln!(out, "module CogSkill_{k1} // {}", skill.name)?;
        writeln!(out, "  cogSkill_{k1} : [0..M_{k1}] init 0;")?;
        writeln!(out, "  cogSkillPred_{k1} : [0..M_{k1}] init 0;")?;
        writeln!(out)?;
        for block in &spec.profiles {
            write!(out, "  [ObserveCogSkill_{k1}] profile={} ->", block.profile)?;
            let m = skill.level_count();
            for i in 1..=m {
                for j in 1..=m {
                    let sep = if i == 1 && j == 1 { " " } else { "\n      + " };
                    write!(
                        out,
                        "{sep}P_{}_{k1}_L{i}L{j} : (cogSkill_{k1}'={i}) & (cogSkillPred_{k1}'={j})",
                        block.profile
                    )?;
                }
            }
            writeln!(out, ";")?;
        }
        writeln!(out, "endmodule")?;
        writeln!(out)?;
    }

    writeln!(out, "rewards \"acceptance\"")?;
    for block in &spec.profiles {
        for (p, slot) in block.rewards.iter().enumerate() {
            for (q, entries) in slot.iter().enumerate() {
                for entry in entries {
                    write!(out, "  [SelectPrompt_{}_{}] profile={}", p + 1, q + 1, block.profile)?;
                    for (k, level) in entry.hidden.0.iter().enumerate() {
                        write!(out, " & cogSkill_{}={}", k + 1, level)?;
                    }
                    writeln!(
                        out,
                        " : utility_{}_{}_{}_{};",
                        block.profile,
                        p + 1,
                        q + 1,
                        entry.alignment.as_str()
                    )?;
                }
            }
        }
    }
    writeln!(out, "endrewards")?;
    writeln!(out)?;
    writeln!(out, "label \"done\" = done;")?;
    Ok(())
}
