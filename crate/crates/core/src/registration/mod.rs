//! Hypothesis generation and local refinement of model-to-segment poses.

mod congruent;
mod icp;
mod kabsch;
mod lcp;

pub use congruent::{congruent_set_matching, MatchConfig, PairTable};
pub use icp::{trim_for_overlap, trimmed_icp, IcpOutcome};
pub use kabsch::best_fit_transform;
pub use lcp::lcp_score;

pub(crate) use congruent::MODEL_SAMPLE_SEED;
pub(crate) use icp::trimmed_icp_with_tree;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::geometry::RigidTransform;

/// A candidate pose with its LCP score.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPose {
    pub pose: RigidTransform,
    pub lcp: f64,
}

#[derive(Serialize, Deserialize)]
struct ScoredRepr {
    q: [f64; 4],
    t: [f64; 3],
    lcp: f64,
}

impl Serialize for ScoredPose {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let t = self.pose.translation();
        ScoredRepr {
            q: self.pose.quaternion_wxyz(),
            t: [t.x, t.y, t.z],
            lcp: self.lcp,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScoredPose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = ScoredRepr::deserialize(d)?;
        if !(0.0..=1.0).contains(&r.lcp) {
            return Err(serde::de::Error::custom(format!("lcp {} outside [0, 1]", r.lcp)));
        }
        Ok(ScoredPose {
            pose: RigidTransform::from_parts(r.q, r.t),
            lcp: r.lcp,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scored_pose_json() {
        let p = ScoredPose { pose: RigidTransform::identity(), lcp: 0.5 };
        let text = serde_json::to_string(&vec![p.clone()]).unwrap();
        assert_eq!(text, r#"[{"q":[1.0,0.0,0.0,0.0],"t":[0.0,0.0,0.0],"lcp":0.5}]"#);
        let back: Vec<ScoredPose> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, vec![p]);
        assert!(serde_json::from_str::<ScoredPose>(r#"{"q":[1,0,0,0],"t":[0,0,0],"lcp":1.5}"#).is_err());
    }
}
