use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analysis::FitTheFitTree;
use crate::dataset::format_number;
use crate::error::{Error, Result};

use super::report::EmmReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    TreeDoc,
    PlotData,
}

impl ExportFormat {
    pub const ALL: [ExportFormat; 3] = [ExportFormat::Dot, ExportFormat::TreeDoc, ExportFormat::PlotData];
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(ExportFormat::Dot),
            "tree-doc" => Ok(ExportFormat::TreeDoc),
            "plotdata" => Ok(ExportFormat::PlotData),
            other => Err(Error::InvalidArgument(format!(
                "unsupported format '{other}' (expected dot, tree-doc or plotdata)"
            ))),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: split nodes show the rule, every node shows the mean
/// effect as a percentage and its share of units.
pub fn tree_to_dot(tree: &FitTheFitTree, title: &str) -> String {
    let mut out = format!("digraph \"{}\" {{\n", escape(title));
    out.push_str("  node [shape=box, fontname=\"Helvetica\"];\n");
    for n in &tree.nodes {
        let stats = format!("mean ITE {:.1}%\\nshare {:.1}%", 100.0 * n.mean_ite, 100.0 * n.share);
        let label = match &n.split {
            Some(s) => format!("{} <= {}\\n{}", escape(&s.name), format_number(s.threshold), stats),
            None => stats,
        };
        out.push_str(&format!("  n{} [label=\"{}\"];\n", n.id, label));
    }
    for n in &tree.nodes {
        if let Some((l, r)) = n.children {
            out.push_str(&format!("  n{} -> n{} [label=\"yes\"];\n", n.id, l));
            out.push_str(&format!("  n{} -> n{} [label=\"no\"];\n", n.id, r));
        }
    }
    out.push_str("}\n");
    out
}

pub fn tree_to_document(tree: &FitTheFitTree) -> String {
    let mut s = serde_json::to_string_pretty(tree).expect("tree serializes");
    s.push('\n');
    s
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Write the requested artifacts under `dir`; returns the files written.
///
/// * `trees/<method>_fit.dot` and `trees/<method>_fit.json` per fitted tree,
/// * `plots/<method>_<covariate>.csv` per subgroup summary.
pub fn export_artifacts(report: &EmmReport, formats: &[ExportFormat], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for block in &report.methods {
        let m = block.method.as_str();
        for f in formats {
            match f {
                ExportFormat::Dot => {
                    let p = dir.join("trees").join(format!("{m}_fit.dot"));
                    write(&p, &tree_to_dot(&block.fit_the_fit, &format!("{m} fit-the-fit")))?;
                    written.push(p);
                }
                ExportFormat::TreeDoc => {
                    let p = dir.join("trees").join(format!("{m}_fit.json"));
                    write(&p, &tree_to_document(&block.fit_the_fit))?;
                    written.push(p);
                }
                ExportFormat::PlotData => {
                    for sg in &block.subgroups {
                        let p = dir.join("plots").join(format!("{m}_{}.csv", sg.covariate));
                        write(&p, &sg.plot_data_csv())?;
                        written.push(p);
                    }
                }
            }
        }
    }
    Ok(written)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    write(path, contents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::FitNode;

    #[test]
    fn stump_is_single_node() {
        let t = FitTheFitTree {
            nodes: vec![FitNode {
                id: 0,
                depth: 1,
                mean_ite: 0.2,
                count: 10,
                share: 1.0,
                split: None,
                children: None,
            }],
            max_depth: 3,
            min_leaf: 1,
        };
        let dot = tree_to_dot(&t, "g");
        assert_eq!(dot.matches("[label=").count(), 1);
        assert!(!dot.contains("->"));
        assert!("svg".parse::<ExportFormat>().is_err());
    }
}
