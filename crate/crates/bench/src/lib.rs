//! Shared inputs for the kernel benchmarks.

use brokerlab::{AgentStream, DistributionSpec};

pub fn unit_uniform() -> DistributionSpec {
    DistributionSpec::Uniform { lo: 0.0, hi: 1.0 }
}

pub fn unit_exponential() -> DistributionSpec {
    DistributionSpec::Exponential { rate: 1.0 }
}

/// `(S^alpha B)^m`.
pub fn balanced(alpha: usize, m: usize) -> AgentStream {
    brokerlab::streams::interleaved(alpha, m)
}
