//! Text formats for primal and dual graphs.
//!
//! Primal file, three sections, `#` starts a comment:
//!
//! ```text
//! [INTERSECTIONS]
//! id
//! [LINKS]
//! id,from,to,dir(1=one-way|2=two-way),speed_limit,lanes,length,ffs,curvature,slope,fc
//! [MANEUVERS]
//! in_link,in_dir,out_link,out_dir,permitted(0|1)
//! ```
//!
//! Travel directions in maneuvers are `1` (from -> to) and `2` (to -> from).
//! The dual graph is exported as a node CSV and an edge CSV.

use std::fmt::Write as _;
use std::path::Path;

use super::attrs::StaticAttrs;
use super::dual::{DualGraph, DualNode};
use super::primal::{DirectedLink, Directionality, Link, Maneuver, PrimalGraph, Travel};
use crate::error::{Error, Result};

pub const DUAL_NODE_HEADER: &str = "node_id,segment_id,direction,speed_limit,lanes,length,free_flow_speed,curvature,slope_percent,functional_class,is_sensor";
pub const DUAL_EDGE_HEADER: &str = "src,dst";

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Line-oriented reader that strips comments and blank lines and keeps
/// 1-based line numbers for error messages.
pub(crate) struct Lines<'a> {
    source: String,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(source: impl Into<String>, text: &'a str) -> Self {
        Lines {
            source: source.into(),
            inner: text.lines().enumerate(),
        }
    }

    pub(crate) fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.clone(),
            line,
            msg: msg.into(),
        }
    }
}

impl<'a> Iterator for Lines<'a> {
    type Item = (usize, &'a str);
    fn next(&mut self) -> Option<Self::Item> {
        for (i, raw) in self.inner.by_ref() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                return Some((i + 1, line));
            }
        }
        None
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(
    lines: &Lines<'_>,
    line: usize,
    name: &str,
    raw: &str,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.trim()
        .parse::<T>()
        .map_err(|e| lines.err(line, format!("field {name}: cannot parse {raw:?}: {e}")))
}

fn fields<'b>(
    lines: &Lines<'_>,
    line: usize,
    text: &'b str,
    expected: usize,
) -> Result<Vec<&'b str>> {
    let f: Vec<&str> = text.split(',').map(str::trim).collect();
    if f.len() != expected {
        return Err(lines.err(
            line,
            format!("expected {expected} fields, found {}", f.len()),
        ));
    }
    Ok(f)
}

pub fn parse_primal(source: &str, text: &str) -> Result<PrimalGraph> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Intersections,
        Links,
        Maneuvers,
    }
    let mut lines = Lines::new(source, text);
    let mut section = Section::None;
    let (mut inters, mut links, mut mans) = (Vec::new(), Vec::new(), Vec::new());
    while let Some((no, line)) = lines.next() {
        match line {
            "[INTERSECTIONS]" => section = Section::Intersections,
            "[LINKS]" => section = Section::Links,
            "[MANEUVERS]" => section = Section::Maneuvers,
            _ => match section {
                Section::None => return Err(lines.err(no, "data before the first section header")),
                Section::Intersections => inters.push(parse_field(&lines, no, "id", line)?),
                Section::Links => {
                    let f = fields(&lines, no, line, 11)?;
                    let dir: u8 = parse_field(&lines, no, "dir", f[3])?;
                    let direction = Directionality::from_code(dir)
                        .ok_or_else(|| lines.err(no, format!("dir must be 1 or 2, got {dir}")))?;
                    links.push(Link {
                        id: parse_field(&lines, no, "id", f[0])?,
                        from: parse_field(&lines, no, "from", f[1])?,
                        to: parse_field(&lines, no, "to", f[2])?,
                        direction,
                        attrs: StaticAttrs {
                            speed_limit: parse_field(&lines, no, "speed_limit", f[4])?,
                            lanes: parse_field(&lines, no, "lanes", f[5])?,
                            length: parse_field(&lines, no, "length", f[6])?,
                            free_flow_speed: parse_field(&lines, no, "ffs", f[7])?,
                            curvature: parse_field(&lines, no, "curvature", f[8])?,
                            slope_percent: parse_field(&lines, no, "slope", f[9])?,
                            functional_class: parse_field(&lines, no, "fc", f[10])?,
                        },
                    });
                }
                Section::Maneuvers => {
                    let f = fields(&lines, no, line, 5)?;
                    let travel = |name: &str, raw: &str| -> Result<Travel> {
                        let c: u8 = parse_field(&lines, no, name, raw)?;
                        Travel::from_code(c)
                            .ok_or_else(|| lines.err(no, format!("{name} must be 1 or 2, got {c}")))
                    };
                    let permitted: u8 = parse_field(&lines, no, "permitted", f[4])?;
                    if permitted > 1 {
                        return Err(lines.err(no, "permitted must be 0 or 1"));
                    }
                    mans.push(Maneuver {
                        from: DirectedLink::new(
                            parse_field(&lines, no, "in_link", f[0])?,
                            travel("in_dir", f[1])?,
                        ),
                        to: DirectedLink::new(
                            parse_field(&lines, no, "out_link", f[2])?,
                            travel("out_dir", f[3])?,
                        ),
                        permitted: permitted == 1,
                    });
                }
            },
        }
    }
    PrimalGraph::new(inters, links, mans)
}

pub fn write_primal(g: &PrimalGraph) -> String {
    let mut s = String::from("[INTERSECTIONS]\n");
    for i in g.intersections() {
        let _ = writeln!(s, "{i}");
    }
    s.push_str("[LINKS]\n# id,from,to,dir,speed_limit,lanes,length,ffs,curvature,slope,fc\n");
    for l in g.links() {
        let a = &l.attrs;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            l.id,
            l.from,
            l.to,
            l.direction.code(),
            a.speed_limit,
            a.lanes,
            a.length,
            a.free_flow_speed,
            a.curvature,
            a.slope_percent,
            a.functional_class
        );
    }
    s.push_str("[MANEUVERS]\n# in_link,in_dir,out_link,out_dir,permitted\n");
    for m in g.maneuvers() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            m.from.link,
            m.from.travel.code(),
            m.to.link,
            m.to.travel.code(),
            m.permitted as u8
        );
    }
    s
}

pub fn read_primal(path: &Path) -> Result<PrimalGraph> {
    parse_primal(&path.display().to_string(), &read_text(path)?)
}

pub fn save_primal(g: &PrimalGraph, path: &Path) -> Result<()> {
    write_text(path, &write_primal(g))
}

pub fn write_dual_nodes(g: &DualGraph) -> String {
    let mut s = String::from(DUAL_NODE_HEADER);
    s.push('\n');
    for (i, n) in g.nodes().iter().enumerate() {
        let a = &n.attrs;
        let _ = writeln!(
            s,
            "{i},{},{},{},{},{},{},{},{},{},{}",
            n.segment,
            n.travel.code(),
            a.speed_limit,
            a.lanes,
            a.length,
            a.free_flow_speed,
            a.curvature,
            a.slope_percent,
            a.functional_class,
            n.sensor as u8
        );
    }
    s
}

pub fn write_dual_edges(g: &DualGraph) -> String {
    let mut s = String::from(DUAL_EDGE_HEADER);
    s.push('\n');
    for (u, v) in g.edges() {
        let _ = writeln!(s, "{u},{v}");
    }
    s
}

pub fn parse_dual(
    node_source: &str,
    nodes_text: &str,
    edge_source: &str,
    edges_text: &str,
) -> Result<DualGraph> {
    let mut lines = Lines::new(node_source, nodes_text);
    let mut nodes = Vec::new();
    while let Some((no, line)) = lines.next() {
        if line.starts_with("node_id") {
            continue;
        }
        let f = fields(&lines, no, line, 11)?;
        let id: usize = parse_field(&lines, no, "node_id", f[0])?;
        if id != nodes.len() {
            return Err(lines.err(
                no,
                format!(
                    "node ids must be consecutive from 0; expected {}",
                    nodes.len()
                ),
            ));
        }
        let dir: u8 = parse_field(&lines, no, "direction", f[2])?;
        let sensor: u8 = parse_field(&lines, no, "is_sensor", f[10])?;
        nodes.push(DualNode {
            segment: parse_field(&lines, no, "segment_id", f[1])?,
            travel: Travel::from_code(dir)
                .ok_or_else(|| lines.err(no, "direction must be 1 or 2"))?,
            attrs: StaticAttrs {
                speed_limit: parse_field(&lines, no, "speed_limit", f[3])?,
                lanes: parse_field(&lines, no, "lanes", f[4])?,
                length: parse_field(&lines, no, "length", f[5])?,
                free_flow_speed: parse_field(&lines, no, "free_flow_speed", f[6])?,
                curvature: parse_field(&lines, no, "curvature", f[7])?,
                slope_percent: parse_field(&lines, no, "slope_percent", f[8])?,
                functional_class: parse_field(&lines, no, "functional_class", f[9])?,
            },
            sensor: sensor == 1,
        });
    }
    let mut lines = Lines::new(edge_source, edges_text);
    let mut edges = Vec::new();
    while let Some((no, line)) = lines.next() {
        if line.starts_with("src") {
            continue;
        }
        let f = fields(&lines, no, line, 2)?;
        let (u, v): (usize, usize) = (
            parse_field(&lines, no, "src", f[0])?,
            parse_field(&lines, no, "dst", f[1])?,
        );
        if u >= nodes.len() || v >= nodes.len() {
            return Err(lines.err(no, format!("edge ({u},{v}) references a missing node")));
        }
        edges.push((u, v));
    }
    DualGraph::from_parts(nodes, edges)
}

pub fn read_dual(nodes_path: &Path, edges_path: &Path) -> Result<DualGraph> {
    parse_dual(
        &nodes_path.display().to_string(),
        &read_text(nodes_path)?,
        &edges_path.display().to_string(),
        &read_text(edges_path)?,
    )
}

pub fn save_dual(g: &DualGraph, nodes_path: &Path, edges_path: &Path) -> Result<()> {
    write_text(nodes_path, &write_dual_nodes(g))?;
    write_text(edges_path, &write_dual_edges(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_dual;

    const SAMPLE: &str = "\
# tiny network
[INTERSECTIONS]
1
2
3
[LINKS]
10,1,2,2,50,2,120.5,45,0.01,1.5,3
11,2,3,1,30,1,80,28,0,0,5
[MANEUVERS]
10,1,11,1,1
10,2,10,1,0 # U-turn stays forbidden
";

    #[test]
    fn parse_and_write_are_inverse() {
        let g = parse_primal("sample", SAMPLE).unwrap();
        assert_eq!(g.links().len(), 2);
        assert_eq!(g.maneuvers().len(), 2);
        let again = parse_primal("again", &write_primal(&g)).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn bad_rows_report_line_numbers() {
        let bad = SAMPLE.replace("11,2,3,1,30,1,80,28,0,0,5", "11,2,3,7,30,1,80,28,0,0,5");
        match parse_primal("bad", &bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 8),
            other => panic!("unexpected {other:?}"),
        }
        let short = SAMPLE.replace("10,1,11,1,1", "10,1,11,1");
        match parse_primal("short", &short) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 10),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_link_in_maneuver_is_invalid() {
        let bad = SAMPLE.replace("10,1,11,1,1", "10,1,99,1,1");
        assert!(matches!(
            parse_primal("bad", &bad),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn dual_csv_round_trip() {
        let g = parse_primal("sample", SAMPLE).unwrap();
        let mut d = build_dual(&g).unwrap();
        d.set_sensor(1, true);
        let back = parse_dual("n", &write_dual_nodes(&d), "e", &write_dual_edges(&d)).unwrap();
        assert_eq!(d, back);
        assert!(write_dual_nodes(&d).starts_with(DUAL_NODE_HEADER));
    }
}
