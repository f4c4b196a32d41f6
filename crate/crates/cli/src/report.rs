//! Text artifacts describing a final gate.

use std::fmt::Write as _;

use weylctl::functionals::{TargetKind, TargetSpec};
use weylctl::gate_io::format_gate;
use weylctl::geometry::{
    class_distance, extract_local_factors, gate_error, local_invariants, weyl_coordinates,
    EquivalenceClassTable, CLASS_MATCH_TOL,
};
use weylctl::types::{unitarity_defect, GateMatrix};

/// One-line summary used by `weylctl invariants`.
pub fn invariants_line(u: &GateMatrix) -> Result<String, weylctl::Error> {
    let g = local_invariants(u)?;
    let c = weyl_coordinates(u)?;
    let (class, d) = EquivalenceClassTable::new().nearest(&g);
    let name = if d <= CLASS_MATCH_TOL { class.name() } else { "none" };
    Ok(format!(
        "g=({:.6},{:.6},{:.6}) c=({:.6},{:.6},{:.6}) class={name} d={d:.3e}",
        g.g1 + 0.0,
        g.g2 + 0.0,
        g.g3 + 0.0,
        c.cx + 0.0,
        c.cy + 0.0,
        c.cz + 0.0
    ))
}

pub fn gate_report(u: &GateMatrix, target: &TargetSpec) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# projected gate U");
    s.push_str(&format_gate(u));
    let _ = writeln!(s, "\nunitarity_defect={:e}", unitarity_defect(u));
    let _ = writeln!(s, "# target");
    s.push_str(&format_gate(target.gate()));
    match (local_invariants(u), weyl_coordinates(u)) {
        (Ok(g), Ok(c)) => {
            let d = class_distance(&g, &target.invariants());
            let _ = writeln!(s, "\ninvariants=({:e},{:e},{:e})", g.g1, g.g2, g.g3);
            let _ = writeln!(s, "weyl=({:e},{:e},{:e})", c.cx, c.cy, c.cz);
            let _ = writeln!(s, "class_distance={d:e}");
            match target.kind() {
                TargetKind::DirectGate => {
                    let id = GateMatrix::identity(4);
                    let _ = writeln!(s, "E={:e}", gate_error(u, target.gate(), &id, &id));
                }
                TargetKind::EquivalenceClass => {
                    match extract_local_factors(u, target.gate(), CLASS_MATCH_TOL) {
                        Ok(f) => {
                            let _ = writeln!(s, "E={:e}", gate_error(u, target.gate(), &f.k1, &f.k2));
                            let _ = writeln!(s, "# k1");
                            s.push_str(&format_gate(&f.k1));
                            let _ = writeln!(s, "\n# k2");
                            s.push_str(&format_gate(&f.k2));
                            s.push('\n');
                        }
                        Err(e) => {
                            let _ = writeln!(s, "E=nan\n# no local factors: {e}");
                        }
                    }
                }
            }
        }
        (Err(e), _) | (_, Err(e)) => {
            let _ = writeln!(s, "\n# invariants unavailable: {e}");
        }
    }
    s
}
