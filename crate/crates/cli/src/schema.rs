//! JSON file formats for instances and graphs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tie_auction::hardness::Graph;
use tie_auction::matroid::{check_matroid_axioms, MatroidSpec, AXIOM_CHECK_LIMIT};
use tie_auction::valuation::{AuctionInstance, Component, WmrsValuation};
use tie_auction::ItemSet;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub num_items: usize,
    pub bidders: Vec<BidderFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BidderFile {
    pub components: Vec<ComponentFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentFile {
    pub weight: f64,
    pub matroid: MatroidFile,
}

/// Uniform matroids take their ground set from `num_items`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatroidFile {
    Uniform {
        k: usize,
    },
    Partition {
        blocks: Vec<Vec<usize>>,
        capacities: Vec<usize>,
    },
    Graphic {
        num_vertices: usize,
        edges: Vec<(usize, usize)>,
    },
    Paving {
        graph: Graph,
    },
    Explicit {
        ground_size: usize,
        independent_sets: Vec<Vec<usize>>,
    },
}

impl MatroidFile {
    fn to_spec(&self, num_items: usize) -> MatroidSpec {
        match self {
            MatroidFile::Uniform { k } => MatroidSpec::uniform(num_items, *k),
            MatroidFile::Partition { blocks, capacities } => {
                MatroidSpec::partition(blocks.clone(), capacities.clone())
            }
            MatroidFile::Graphic {
                num_vertices,
                edges,
            } => MatroidSpec::graphic(*num_vertices, edges.clone()),
            MatroidFile::Paving { graph } => MatroidSpec::paving(graph.clone()),
            MatroidFile::Explicit {
                ground_size,
                independent_sets,
            } => MatroidSpec::explicit(
                *ground_size,
                independent_sets
                    .iter()
                    .map(|s| ItemSet::from_elements(s.iter().copied()))
                    .collect(),
            ),
        }
    }

    fn from_spec(spec: &MatroidSpec) -> Self {
        match spec {
            MatroidSpec::Uniform { k, .. } => MatroidFile::Uniform { k: *k },
            MatroidSpec::Partition { blocks, capacities } => MatroidFile::Partition {
                blocks: blocks.clone(),
                capacities: capacities.clone(),
            },
            MatroidSpec::Graphic {
                num_vertices,
                edges,
            } => MatroidFile::Graphic {
                num_vertices: *num_vertices,
                edges: edges.clone(),
            },
            MatroidSpec::Paving { graph } => MatroidFile::Paving {
                graph: graph.clone(),
            },
            MatroidSpec::Explicit {
                ground_size,
                independent_sets,
            } => MatroidFile::Explicit {
                ground_size: *ground_size,
                independent_sets: independent_sets.iter().map(|s| s.iter().collect()).collect(),
            },
        }
    }
}

impl InstanceFile {
    /// Validates the file and builds the instance. Explicit matroids on at most 16
    /// elements are also checked against the matroid axioms.
    pub fn to_instance(&self) -> Result<AuctionInstance, CliError> {
        let m = self.num_items;
        let mut valuations = Vec::with_capacity(self.bidders.len());
        for (i, bidder) in self.bidders.iter().enumerate() {
            let mut components = Vec::with_capacity(bidder.components.len());
            for (l, c) in bidder.components.iter().enumerate() {
                let field = format!("bidders[{i}].components[{l}]");
                if let MatroidFile::Explicit {
                    ground_size,
                    independent_sets,
                } = &c.matroid
                {
                    if let Some(e) = independent_sets.iter().flatten().find(|&&e| e >= (*ground_size).min(tie_auction::itemset::MAX_GROUND)) {
                        return Err(CliError::Validation(format!(
                            "{field}.matroid.independent_sets: element {e} outside ground set of size {ground_size}"
                        )));
                    }
                }
                let matroid = c.matroid.to_spec(m);
                if matches!(c.matroid, MatroidFile::Explicit { .. }) {
                    matroid.validate().map_err(|e| CliError::field(&field, e))?;
                    if matroid.ground_size() <= AXIOM_CHECK_LIMIT {
                        let report = check_matroid_axioms(&matroid).map_err(|e| CliError::field(&field, e))?;
                        if let Some(v) = report.violation {
                            return Err(CliError::Validation(format!(
                                "{field}.matroid: not a matroid ({v:?})"
                            )));
                        }
                    }
                }
                components.push(Component {
                    weight: c.weight,
                    matroid,
                });
            }
            valuations.push(
                WmrsValuation::new(m, components)
                    .map_err(|e| CliError::field(&format!("bidders[{i}]"), e))?,
            );
        }
        AuctionInstance::new(m, valuations).map_err(|e| CliError::field("instance", e))
    }

    pub fn from_instance(instance: &AuctionInstance) -> Self {
        InstanceFile {
            num_items: instance.num_items(),
            bidders: instance
                .valuations()
                .iter()
                .map(|v| BidderFile {
                    components: v
                        .components()
                        .iter()
                        .map(|c| ComponentFile {
                            weight: c.weight,
                            matroid: MatroidFile::from_spec(&c.matroid),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn parse_instance_str(text: &str) -> Result<AuctionInstance, CliError> {
    let file: InstanceFile =
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("instance schema: {e}")))?;
    file.to_instance()
}

pub fn parse_instance(path: &Path) -> Result<AuctionInstance, CliError> {
    parse_instance_str(&read(path)?).map_err(|e| e.context(&path.display().to_string()))
}

pub fn serialize_instance(instance: &AuctionInstance) -> String {
    serde_json::to_string_pretty(&InstanceFile::from_instance(instance)).expect("instances serialize")
}

pub fn parse_graph_str(text: &str) -> Result<Graph, CliError> {
    let g: Graph =
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("graph schema: {e}")))?;
    g.validate().map_err(|e| CliError::field("graph", e))?;
    Ok(g)
}

pub fn parse_graph(path: &Path) -> Result<Graph, CliError> {
    parse_graph_str(&read(path)?).map_err(|e| e.context(&path.display().to_string()))
}
