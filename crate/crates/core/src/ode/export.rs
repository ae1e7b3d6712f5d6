use std::io::{self, Write};

use super::Trajectory;
use crate::format::float17;

pub const CONCENTRATION_HEADER: &str = "t,a,b,m,concentration";
pub const OBSERVABLE_HEADER: &str = "t,total_conc,mean_a,mean_b,mass,a2_minus_a,b2_minus_b,ab,\
lost_conc,lost_a,lost_b,lost_mass,lost_a2_minus_a,lost_b2_minus_b,lost_ab";

impl Trajectory {
    /// One row per checkpoint and tracked type: `t,a,b,m,concentration`.
    pub fn write_concentrations_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CONCENTRATION_HEADER}")?;
        for cp in &self.checkpoints {
            let t = float17(cp.time());
            for p in &self.types {
                writeln!(w, "{t},{},{},{},{}", p.a, p.b, p.m, float17(cp.state.get(p)))?;
            }
        }
        Ok(())
    }

    /// Tracked moments followed by the overflow reservoir's moments.
    pub fn write_observables_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{OBSERVABLE_HEADER}")?;
        for cp in &self.checkpoints {
            let (r, l) = (&cp.retained, &cp.lost);
            let cells = [
                cp.time(),
                r.count,
                r.male,
                r.female,
                r.mass,
                r.male_factorial2(),
                r.female_factorial2(),
                r.male_female,
                l.count,
                l.male,
                l.female,
                l.mass,
                l.male_factorial2(),
                l.female_factorial2(),
                l.male_female,
            ];
            let line: Vec<String> = cells.iter().map(|x| float17(*x)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}
