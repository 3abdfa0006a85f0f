#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace cdprl {

/// Goal space metadata: dimensionality and the distance threshold under
/// which an achieved goal counts as success.
struct GoalSpace {
  int dim = 1;
  double tolerance = 0.05;

  void validate() const;
};

/// Designated slice of the state vector that holds the achieved goal.
struct GoalSlice {
  int offset = 0;
  int dim = 1;
};

/// One environment step. `achieved_goal` is the goal-space slice of
/// `next_state`; `relabeled` marks hindsight goal substitution.
struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  double reward = -1.0;  // in {-1, 0}
  Eigen::VectorXd next_state;
  Eigen::VectorXd goal;
  Eigen::VectorXd achieved_goal;
  bool done = false;
  bool relabeled = false;
};

/// Fixed-horizon episode plus the density/priority bookkeeping attached to
/// it by the replay buffer. `achieved_goal_feature` is the concatenation of
/// the T+1 achieved-goal states.
struct Trajectory {
  std::vector<Transition> transitions;
  Eigen::VectorXd achieved_goal_feature;
  double raw_density = 0.0;
  double normalized_density = 0.0;
  double complement = 0.0;
  double priority = 0.0;
  double episode_td_error = 0.0;
  std::uint64_t seq = 0;  // buffer insertion order, assigned on store

  int horizon() const { return static_cast<int>(transitions.size()); }
};

/// Sparse -1/0 reward: 0 iff the Euclidean goal distance is within
/// tolerance. Throws std::invalid_argument on dimension mismatch.
double sparse_reward(const Eigen::VectorXd& achieved_goal,
                     const Eigen::VectorXd& desired_goal,
                     const GoalSpace& space);

/// Concatenated achieved-goal states s_0 || s_1 || ... || s_T of an
/// episode: the initial one is read from transitions[0].state via `slice`,
/// the rest come from each transition's achieved_goal. Output length is
/// (T+1)*slice.dim. Throws on empty or ragged input.
Eigen::VectorXd extract_achieved_feature(std::span<const Transition> transitions,
                                         const GoalSlice& slice);

/// Sum of gamma^i * rewards[i]. Requires gamma in [0,1].
double discounted_return(std::span<const double> rewards, double gamma);

/// Builds a Trajectory with its achieved-goal feature filled in.
Trajectory make_trajectory(std::vector<Transition> transitions, const GoalSlice& slice);

}  // namespace cdprl
