//! Rank-to-team topology.
//!
//! A world of `world_size` ranks is split into `num_teams` contiguous blocks
//! of `team_size` ranks each. The rank with a given team rank in another team
//! is a replica of this rank.

use alloc::vec::Vec;
use core::fmt;

/// World layout: `world_size = num_teams * team_size`, exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WorldConfig {
    world_size: usize,
    num_teams: usize,
    team_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TopologyError {
    /// world_size is not an exact multiple of num_teams.
    Indivisible { world_size: usize, num_teams: usize },
    /// Zero teams or zero ranks requested.
    Empty,
    /// A rank index outside [0, world_size).
    RankOutOfRange { world_rank: usize, world_size: usize },
    /// An address whose fields are inconsistent with the configuration.
    InvalidAddress,
}

impl fmt::Display for TopologyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyError::Indivisible {
                world_size,
                num_teams,
            } => write!(
                f,
                "world size {world_size} is not divisible into {num_teams} equal teams"
            ),
            TopologyError::Empty => write!(f, "world must have at least one team and one rank"),
            TopologyError::RankOutOfRange {
                world_rank,
                world_size,
            } => write!(f, "world rank {world_rank} out of range 0..{world_size}"),
            TopologyError::InvalidAddress => write!(f, "rank address inconsistent with world"),
        }
    }
}

impl WorldConfig {
    /// Build a layout from the total rank pool and the team count.
    /// Unequal teams are a hard error, not a remainder-absorbing split.
    pub fn new(world_size: usize, num_teams: usize) -> Result<Self, TopologyError> {
        if world_size == 0 || num_teams == 0 {
            return Err(TopologyError::Empty);
        }
        if world_size % num_teams != 0 {
            return Err(TopologyError::Indivisible {
                world_size,
                num_teams,
            });
        }
        Ok(WorldConfig {
            world_size,
            num_teams,
            team_size: world_size / num_teams,
        })
    }

    /// Layout from ranks-per-team and team count.
    pub fn from_team_shape(team_size: usize, num_teams: usize) -> Result<Self, TopologyError> {
        WorldConfig::new(launch_size(team_size, num_teams), num_teams)
    }

    pub fn world_size(&self) -> usize {
        self.world_size
    }

    pub fn num_teams(&self) -> usize {
        self.num_teams
    }

    pub fn team_size(&self) -> usize {
        self.team_size
    }

    pub fn addresses(&self) -> impl Iterator<Item = RankAddress> + '_ {
        (0..self.world_size).map(|r| map_world_rank(r, *self).expect("in-range rank"))
    }
}

/// Identity of one simulated process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RankAddress {
    pub world_rank: usize,
    pub team: usize,
    pub team_rank: usize,
}

impl fmt::Display for RankAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}r{}", self.team, self.team_rank)
    }
}

impl RankAddress {
    pub fn from_parts(team: usize, team_rank: usize, cfg: WorldConfig) -> Result<Self, TopologyError> {
        if team >= cfg.num_teams || team_rank >= cfg.team_size {
            return Err(TopologyError::InvalidAddress);
        }
        Ok(RankAddress {
            world_rank: team * cfg.team_size + team_rank,
            team,
            team_rank,
        })
    }

    fn is_valid(&self, cfg: WorldConfig) -> bool {
        self.world_rank < cfg.world_size
            && self.team == self.world_rank / cfg.team_size
            && self.team_rank == self.world_rank % cfg.team_size
    }
}

/// Map a flat world rank onto (team, team rank). Teams are contiguous blocks:
/// team = world_rank / team_size.
pub fn map_world_rank(world_rank: usize, cfg: WorldConfig) -> Result<RankAddress, TopologyError> {
    if world_rank >= cfg.world_size {
        return Err(TopologyError::RankOutOfRange {
            world_rank,
            world_size: cfg.world_size,
        });
    }
    Ok(RankAddress {
        world_rank,
        team: world_rank / cfg.team_size,
        team_rank: world_rank % cfg.team_size,
    })
}

/// The K-1 ranks with the same team rank in the other teams.
pub fn replicas_of(addr: RankAddress, cfg: WorldConfig) -> Result<Vec<RankAddress>, TopologyError> {
    if !addr.is_valid(cfg) {
        return Err(TopologyError::InvalidAddress);
    }
    Ok((0..cfg.num_teams)
        .filter(|&t| t != addr.team)
        .map(|t| RankAddress::from_parts(t, addr.team_rank, cfg).expect("valid team"))
        .collect())
}

/// Total process count to launch for `num_teams` teams of `ranks_per_team`.
pub fn launch_size(ranks_per_team: usize, num_teams: usize) -> usize {
    ranks_per_team * num_teams
}

/// The two classical replication consistency protocols, kept here purely as
/// message-count accounting to contrast with heartbeat-only overhead.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConsistencyProtocol {
    /// Every message duplicated to all replicas: m*r^2 + c messages.
    Mirror,
    /// Each message only to the corresponding replica: m*r + c messages.
    Parallel,
}

/// Messages sent by the given protocol for `m` application messages at
/// replication factor `r`, plus `c` consistency control messages.
pub fn protocol_message_count(m: u64, r: u64, c: u64, protocol: ConsistencyProtocol) -> u64 {
    match protocol {
        ConsistencyProtocol::Mirror => m * r * r + c,
        ConsistencyProtocol::Parallel => m * r + c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;
    use proptest::prelude::*;

    #[test]
    fn eight_ranks_two_teams_matches_fat_tree_layout() {
        // team 0 occupies world ranks 0..4, team 1 occupies 4..8
        let cfg = WorldConfig::new(8, 2).unwrap();
        let a = map_world_rank(5, cfg).unwrap();
        assert_eq!((a.team, a.team_rank), (1, 1));
        for r in 0..4 {
            assert_eq!(map_world_rank(r, cfg).unwrap().team, 0);
        }
        for r in 4..8 {
            assert_eq!(map_world_rank(r, cfg).unwrap().team, 1);
        }
    }

    #[test]
    fn zero_rank_is_team_zero() {
        let cfg = WorldConfig::new(30, 3).unwrap();
        let a = map_world_rank(0, cfg).unwrap();
        assert_eq!((a.team, a.team_rank), (0, 0));
    }

    #[test]
    fn last_rank_of_thirty_in_three_teams() {
        let cfg = WorldConfig::new(30, 3).unwrap();
        let a = map_world_rank(29, cfg).unwrap();
        assert_eq!((a.team, a.team_rank), (2, 9));
    }

    #[test]
    fn out_of_range_and_indivisible_are_errors() {
        let cfg = WorldConfig::new(8, 2).unwrap();
        assert!(matches!(
            map_world_rank(8, cfg),
            Err(TopologyError::RankOutOfRange { .. })
        ));
        assert!(matches!(
            WorldConfig::new(10, 3),
            Err(TopologyError::Indivisible { .. })
        ));
        assert!(matches!(WorldConfig::new(0, 1), Err(TopologyError::Empty)));
    }

    #[test]
    fn replicas_of_three_teams() {
        let cfg = WorldConfig::new(9, 3).unwrap();
        let a = RankAddress::from_parts(0, 2, cfg).unwrap();
        let reps = replicas_of(a, cfg).unwrap();
        let got: Vec<(usize, usize)> = reps.iter().map(|r| (r.team, r.team_rank)).collect();
        assert_eq!(got, [(1, 2), (2, 2)]);
    }

    #[test]
    fn replicas_single_team_is_empty() {
        let cfg = WorldConfig::new(4, 1).unwrap();
        let a = map_world_rank(2, cfg).unwrap();
        assert!(replicas_of(a, cfg).unwrap().is_empty());
    }

    #[test]
    fn replicas_two_teams() {
        let cfg = WorldConfig::new(8, 2).unwrap();
        let a = RankAddress::from_parts(1, 0, cfg).unwrap();
        let reps = replicas_of(a, cfg).unwrap();
        assert_eq!(reps.len(), 1);
        assert_eq!((reps[0].team, reps[0].team_rank), (0, 0));
    }

    #[test]
    fn invalid_address_is_error() {
        let cfg = WorldConfig::new(8, 2).unwrap();
        let bogus = RankAddress {
            world_rank: 5,
            team: 0,
            team_rank: 1,
        };
        assert_eq!(replicas_of(bogus, cfg), Err(TopologyError::InvalidAddress));
    }

    #[test]
    fn launch_sizes() {
        assert_eq!(launch_size(10, 3), 30);
        assert_eq!(launch_size(17, 1), 17);
        assert_eq!(launch_size(28, 2), 56);
    }

    #[test]
    fn protocol_counts() {
        use ConsistencyProtocol::*;
        assert_eq!(protocol_message_count(10, 2, 0, Mirror), 40);
        assert_eq!(protocol_message_count(10, 2, 0, Parallel), 20);
        assert_eq!(protocol_message_count(7, 1, 0, Mirror), 7);
        assert_eq!(protocol_message_count(7, 1, 0, Parallel), 7);
    }

    proptest! {
        #[test]
        fn mapping_is_a_bijection(num_teams in 1usize..40, team_size in 1usize..40) {
            let cfg = WorldConfig::new(num_teams * team_size, num_teams).unwrap();
            let mut seen = BTreeSet::new();
            for r in 0..cfg.world_size() {
                let a = map_world_rank(r, cfg).unwrap();
                prop_assert!(a.team < num_teams && a.team_rank < team_size);
                prop_assert!(seen.insert((a.team, a.team_rank)));
                // contiguity: members of team T are exactly [T*R, (T+1)*R)
                prop_assert_eq!(a.world_rank, a.team * team_size + a.team_rank);
            }
            prop_assert_eq!(seen.len(), cfg.world_size());
        }

        #[test]
        fn replica_relation_is_symmetric(num_teams in 1usize..8, team_size in 1usize..8,
                                         pick in 0usize..64) {
            let cfg = WorldConfig::new(num_teams * team_size, num_teams).unwrap();
            let a = map_world_rank(pick % cfg.world_size(), cfg).unwrap();
            let reps = replicas_of(a, cfg).unwrap();
            prop_assert_eq!(reps.len(), num_teams - 1);
            for b in reps {
                prop_assert_eq!(b.team_rank, a.team_rank);
                prop_assert_ne!(b.team, a.team);
                prop_assert!(replicas_of(b, cfg).unwrap().contains(&a));
            }
        }

        #[test]
        fn mirror_dominates_parallel(m in 0u64..10_000, r in 1u64..64, c in 0u64..10_000) {
            use ConsistencyProtocol::*;
            prop_assert_eq!(protocol_message_count(m, r, c, Mirror), m * r * r + c);
            prop_assert_eq!(protocol_message_count(m, r, c, Parallel), m * r + c);
            prop_assert!(
                protocol_message_count(m, r, c, Mirror) >= protocol_message_count(m, r, c, Parallel)
            );
        }
    }
}
