//! Derive a UE schedule from a coverage map: at each waypoint the UE camps
//! on the strongest site.

use crate::coverage::RssGrid;
use crate::ledger::Tick;

use super::scenario::{ScheduleEntry, MACRO};

/// Builds a schedule from timed waypoints `(tick, x_m, y_m)`. The strongest
/// site at each waypoint is mapped to a scenario cell name by
/// `cell_for_site`; sites that map to nothing (macro sites, cells outside the
/// scenario) become `"macro"`. Consecutive duplicates are collapsed.
pub fn schedule_from_grid(
    grid: &RssGrid,
    waypoints: &[(Tick, f64, f64)],
    mut cell_for_site: impl FnMut(&str) -> Option<String>,
) -> Vec<ScheduleEntry> {
    let mut out: Vec<ScheduleEntry> = Vec::new();
    for &(tick, x, y) in waypoints {
        let i = grid.nearest_index(x, y);
        let cell = grid
            .serving_id(i)
            .and_then(&mut cell_for_site)
            .unwrap_or_else(|| MACRO.to_owned());
        if out.last().is_some_and(|e| e.cell == cell) {
            continue;
        }
        if out.last().is_some_and(|e| e.tick >= tick) {
            continue;
        }
        out.push(ScheduleEntry { tick, cell });
    }
    out
}
