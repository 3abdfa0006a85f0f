#include "cdprl/core.hpp"

#include <stdexcept>
#include <string>

namespace cdprl {

void GoalSpace::validate() const {
  if (dim < 1) throw std::invalid_argument("GoalSpace: dim must be >= 1");
  if (tolerance < 0.0) throw std::invalid_argument("GoalSpace: tolerance must be >= 0");
}

double sparse_reward(const Eigen::VectorXd& achieved_goal,
                     const Eigen::VectorXd& desired_goal,
                     const GoalSpace& space) {
  if (achieved_goal.size() != space.dim || desired_goal.size() != space.dim) {
    throw std::invalid_argument("sparse_reward: goal dimension mismatch (expected " +
                                std::to_string(space.dim) + ")");
  }
  const double dist = (achieved_goal - desired_goal).norm();
  return dist <= space.tolerance ? 0.0 : -1.0;
}

Eigen::VectorXd extract_achieved_feature(std::span<const Transition> transitions,
                                         const GoalSlice& slice) {
  if (transitions.empty()) {
    throw std::invalid_argument("extract_achieved_feature: empty trajectory");
  }
  const auto horizon = static_cast<Eigen::Index>(transitions.size());
  const Eigen::Index dim = slice.dim;
  if (transitions.front().state.size() < slice.offset + dim) {
    throw std::invalid_argument("extract_achieved_feature: state too short for goal slice");
  }

  Eigen::VectorXd feature((horizon + 1) * dim);
  feature.head(dim) = transitions.front().state.segment(slice.offset, dim);
  for (Eigen::Index t = 0; t < horizon; ++t) {
    if (transitions[t].achieved_goal.size() != dim) {
      throw std::invalid_argument("extract_achieved_feature: ragged achieved_goal at step " +
                                  std::to_string(t));
    }
    feature.segment((t + 1) * dim, dim) = transitions[t].achieved_goal;
  }
  return feature;
}

double discounted_return(std::span<const double> rewards, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) {
    throw std::invalid_argument("discounted_return: gamma must be in [0,1]");
  }
  double total = 0.0;
  double scale = 1.0;
  for (double r : rewards) {
    total += scale * r;
    scale *= gamma;
  }
  return total;
}

Trajectory make_trajectory(std::vector<Transition> transitions, const GoalSlice& slice) {
  Trajectory traj;
  traj.achieved_goal_feature = extract_achieved_feature(transitions, slice);
  traj.transitions = std::move(transitions);
  return traj;
}

}  // namespace cdprl
