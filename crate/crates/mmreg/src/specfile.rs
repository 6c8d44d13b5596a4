//! System description files.
//!
//! ```json
//! {"n": 5, "edges": [[1, 2], [2, 3], [3, 4], [3, 5], [4, 5]], "writer": 1}
//! {"n": 3, "bag": [[1, 2], [3]]}
//! ```
//!
//! Exactly one of `bag` and `edges` must be present. `edges` describes a
//! uniform system. The writer defaults to `p1`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mmreg_core::{Bag, Graph, SystemSpec};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bag: Option<Vec<Vec<u32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[u32; 2]>>,
    #[serde(default = "default_writer")]
    pub writer: u32,
}

fn default_writer() -> u32 {
    1
}

impl SpecFile {
    pub fn from_bag(bag: &Bag, writer: u32) -> Self {
        let sets = bag.sets().iter().map(|s| s.iter().map(|p| p.get()).collect()).collect();
        SpecFile { name: None, n: bag.n(), bag: Some(sets), edges: None, writer }
    }

    pub fn from_graph(graph: &Graph, writer: u32) -> Self {
        let edges = graph.edges().into_iter().map(|(u, v)| [u.get(), v.get()]).collect();
        SpecFile { name: None, n: graph.n(), bag: None, edges: Some(edges), writer }
    }

    /// The graph, for uniform systems.
    pub fn graph(&self) -> Result<Option<Graph>> {
        match &self.edges {
            None => Ok(None),
            Some(edges) => {
                let pairs: Vec<(u32, u32)> = edges.iter().map(|e| (e[0], e[1])).collect();
                Ok(Some(Graph::new(self.n, &pairs)?))
            }
        }
    }

    pub fn bag(&self) -> Result<Bag> {
        match (&self.bag, self.graph()?) {
            (Some(_), Some(_)) => bail!("spec has both `bag` and `edges`; give exactly one"),
            (None, None) => bail!("spec needs one of `bag` or `edges`"),
            (Some(sets), None) => Ok(Bag::new(self.n, sets)?.normalize()),
            (None, Some(g)) => Ok(g.induce_uniform()),
        }
    }

    pub fn system(&self) -> Result<SystemSpec> {
        Ok(SystemSpec::new(&self.bag()?, self.writer)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_give_the_uniform_bag() {
        let f = SpecFile::parse(r#"{"n":5,"edges":[[1,2],[2,3],[3,4],[3,5],[4,5]]}"#).unwrap();
        let spec = f.system().unwrap();
        assert_eq!(spec.writer().get(), 1);
        assert_eq!(spec.bag(), &mmreg_core::model::example_graph().induce_uniform());
    }

    #[test]
    fn exactly_one_description() {
        assert!(SpecFile::parse(r#"{"n":2}"#).unwrap().bag().is_err());
        assert!(SpecFile::parse(r#"{"n":2,"bag":[[1]],"edges":[]}"#).unwrap().bag().is_err());
        assert!(SpecFile::parse(r#"{"n":2,"sets":[[1]]}"#).is_err());
    }

    #[test]
    fn bag_is_normalized_and_validated() {
        let f = SpecFile::parse(r#"{"n":3,"bag":[[1,2]],"writer":2}"#).unwrap();
        assert_eq!(f.bag().unwrap().sets().len(), 2);
        assert!(SpecFile::parse(r#"{"n":3,"bag":[[1,4]]}"#).unwrap().bag().is_err());
        assert!(SpecFile::parse(r#"{"n":3,"bag":[[1]],"writer":4}"#).unwrap().system().is_err());
    }

    #[test]
    fn round_trip() {
        let bag = Bag::singletons(3).unwrap();
        let f = SpecFile::from_bag(&bag, 2);
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(text, r#"{"n":3,"bag":[[1],[2],[3]],"writer":2}"#);
        assert_eq!(SpecFile::parse(&text).unwrap().bag().unwrap(), bag);
    }
}
