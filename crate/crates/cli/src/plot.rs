//! gnuplot data and script files for a Wigner grid.

use std::io::{self, Write};

use homodyne_ml::WignerGrid;

/// `q p W` rows, one blank-line separated block per `q` value, as `splot`
/// expects for gridded data. Failed points are written as `NaN`.
pub fn write_data<W: Write>(grid: &WignerGrid, mut out: W) -> io::Result<()> {
    writeln!(out, "# q p W")?;
    for (iq, _) in grid.q.iter().enumerate() {
        for ip in 0..grid.p.len() {
            let pt = grid.at(iq, ip);
            writeln!(out, "{} {} {}", pt.q, pt.p, pt.w)?;
        }
        writeln!(out)?;
    }
    out.flush()
}

pub fn write_script<W: Write>(grid: &WignerGrid, name: &str, mut out: W) -> io::Result<()> {
    let peak = grid
        .values()
        .filter(|w| w.is_finite())
        .fold(0.0f64, |m, w| m.max(w.abs()));
    let range = if peak > 0.0 { peak } else { 1.0 };
    writeln!(out, "set terminal pngcairo size 900,800")?;
    writeln!(out, "set output '{name}.png'")?;
    writeln!(out, "set xlabel 'q'")?;
    writeln!(out, "set ylabel 'p'")?;
    writeln!(out, "set cblabel 'W(q,p)'")?;
    writeln!(out, "set size ratio -1")?;
    writeln!(out, "set view map")?;
    writeln!(out, "set pm3d map")?;
    writeln!(out, "set palette defined (-1 'blue', 0 'white', 1 'red')")?;
    writeln!(out, "set cbrange [{}:{}]", -range, range)?;
    writeln!(out, "splot '{name}.dat' using 1:2:3 with pm3d notitle")?;
    out.flush()
}
