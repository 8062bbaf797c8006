#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lfd/rng.hpp"

namespace lfd {

using Mat = Eigen::MatrixXd;

struct Vec2 {
    double x = 0.0, y = 0.0;
    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
};

struct Pose {
    double x = 0.0, y = 0.0, heading = 0.0;

    // world -> this frame (x forward, y left)
    Vec2 to_local(const Vec2& p) const {
        const double dx = p.x - x, dy = p.y - y;
        const double c = std::cos(heading), s = std::sin(heading);
        return {c * dx + s * dy, -s * dx + c * dy};
    }
    Vec2 to_world(const Vec2& p) const {
        const double c = std::cos(heading), s = std::sin(heading);
        return {x + c * p.x - s * p.y, y + s * p.x + c * p.y};
    }
};

using Polyline = std::vector<Vec2>;

struct LanePolyline {
    Polyline points;
    double half_width = 2.0;
};

// Drivable region = union of lane corridors. Signed distance is positive
// inside, negative outside.
struct LocalMap {
    std::vector<LanePolyline> lanes;

    double signed_distance(const Vec2& p) const;
    // d(sd)/dp; picks the corridor realizing the max and its nearest segment.
    Vec2 signed_distance_grad(const Vec2& p) const;
    bool empty() const { return lanes.empty(); }
};

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);
double polyline_distance(const Vec2& p, const Polyline& line);
// Arc length of the projection of p onto the polyline.
double polyline_project(const Vec2& p, const Polyline& line);
double polyline_length(const Polyline& line);
Vec2 polyline_point_at(const Polyline& line, double s);
double polyline_heading_at(const Polyline& line, double s);

// ---- agents --------------------------------------------------------------

enum class MotionKind { kStationary, kLine, kCross };

// Closed-form scripted motion; pose is a pure function of time.
struct MotionProgram {
    MotionKind kind = MotionKind::kStationary;
    Pose start;
    Vec2 velocity;                 // kLine
    double trigger_time = 0.0;     // kCross: motion starts here
    double travel_limit = 0.0;     // kCross: stop after moving this far
};

struct AgentSpec {
    MotionProgram program;
    double half_len = 1.4;   // along heading
    double half_wid = 0.8;
    Pose pose_at(double t) const;
    double speed_at(double t) const;
};

struct AgentState {
    Pose pose;
    double speed = 0.0;
    double half_len = 1.4;
    double half_wid = 0.8;
};

// ---- world ----------------------------------------------------------------

struct WorldParams {
    double meters_per_pixel = 0.25;
    int front_h = 32, front_w = 32;
    int bev_h = 48, bev_w = 48;
    int bev_ego_row = 36;           // pixel row whose center sits on the ego x axis
    int history_steps = 2;          // H_hist
    int bev_channels = 4;           // drivable, agent occupancy, agent speed, ego speed
    double dt = 0.5;
    double v_max = 10.0;
    double a_max = 4.0;
    double lookahead = 2.0;         // pure-pursuit target distance
    int frames = 6;                 // F
};

struct WorldState {
    Pose ego;
    double ego_speed = 0.0;
    double time = 0.0;
    std::vector<AgentState> agents;
    LocalMap map;
};

// Single-channel forward view: x in (0, front_h*mpp], y lateral. Row 0 is the
// far edge; pixel centers at x=(H-0.5-r)*mpp, y=(W/2-0.5-c)*mpp.
std::vector<double> render_front(const WorldState& state, const WorldParams& wp);

// Ego-centric top-down stack: (history_steps+1) frames x bev_channels, newest
// first, each frame rendered in its own ego frame. Returned layout is
// [row][col][frame*channels + ch], row 0 far ahead.
std::vector<double> render_bev(const WorldState& state, const std::vector<WorldState>& history,
                               const WorldParams& wp);

// ---- scenarios -------------------------------------------------------------

enum class ScenarioKind {
    kStraightFollow,
    kObstacleOvertake,
    kMerge,
    kUnprotectedTurn,
    kEmergencyBrake,
};

ScenarioKind scenario_from_name(const std::string& name);
std::string scenario_name(ScenarioKind kind);
const std::vector<ScenarioKind>& all_scenarios();

// Speed limit zone on the route: v_limit applies for s >= s_start.
struct SpeedZone {
    double s_start = 0.0;
    double s_end = std::numeric_limits<double>::infinity();
    double v_limit = 0.0;
};

struct EmergencyInfo {
    bool present = false;
    double x_cross = 0.0;                                   // crossing point on route
    double trigger_time = std::numeric_limits<double>::infinity();
    int agent_index = -1;
};

// Everything derived deterministically from (kind, seed): geometry, agents,
// the reference route and speeds the expert follows.
struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::kStraightFollow;
    std::uint64_t seed = 0;
    LocalMap map;
    Polyline route;
    double route_len = 0.0;
    double cruise_speed = 5.0;
    Pose start;
    double start_speed = 0.0;
    std::vector<AgentSpec> agents;
    std::vector<SpeedZone> zones;   // static zones (turn arc slow-down)
    EmergencyInfo hazard;
    int t0_max_steps = 0;           // latest episode snapshot offset
};

ScenarioSpec build_scenario(ScenarioKind kind, std::uint64_t seed, const WorldParams& wp);

WorldState initial_state(const ScenarioSpec& spec);
// Agents advanced to time t; ego untouched.
void refresh_agents(const ScenarioSpec& spec, WorldState& state);

// Reference planner: F waypoints (ego frame, dt spacing) following the route
// at the scheduled speed, decaying any lateral offset, and braking for a
// predicted crossing hazard.
std::vector<Vec2> expert_plan(const WorldState& state, const ScenarioSpec& spec,
                              const WorldParams& wp);

// Advance the world one control step with the ego snapped onto the expert
// plan (used when rolling episode snapshots forward).
WorldState step_expert(const WorldState& state, const ScenarioSpec& spec, const WorldParams& wp);

// ---- episodes ---------------------------------------------------------------

enum class Command : int {
    kLeft = 0,
    kRight = 1,
    kStraight = 2,
    kLaneLeft = 3,
    kLaneRight = 4,
    kFollow = 5,
};
constexpr int kNumCommands = 6;

// Maneuver class implied by a trajectory; straight-ish plans accept both
// kStraight and kFollow.
Command classify_command(const std::vector<Vec2>& traj, ScenarioKind kind);
bool command_consistent(int command, const std::vector<Vec2>& traj);

struct Episode {
    std::vector<float> obs_bev;        // bev_h*bev_w*(hist+1)*bev_channels
    std::vector<float> future_front;   // frames*front_h*front_w
    Mat gt_traj;                       // F x 2, ego frame
    int command = 0;
    std::vector<LanePolyline> map_local;  // ego frame
    Mat agent_futures;                 // (num_agents*F) x 2, ego frame
    int num_agents = 0;
    std::uint64_t seed = 0;
    ScenarioKind scenario = ScenarioKind::kStraightFollow;
    double hazard_trigger = -1.0;      // -1 none, +inf standing hazard that never crosses
};

Episode generate_episode(std::uint64_t seed, ScenarioKind kind, const WorldParams& wp);

// ---- closed loop -------------------------------------------------------------

struct ClosedLoopMetrics {
    double route_completion = 0.0;
    bool collided = false;
    bool off_road = false;
    bool success = false;
    double toy_driving_score = 0.0;
    int steps = 0;
    bool valid = true;  // false when the policy produced non-finite output
};

double toy_driving_score(double completion, bool collided, bool off_road);

// Policy: (obs stack, command, live state) -> F x 2 waypoints in the current
// ego frame. Learned policies read only the observation and command; the
// oracle replans from the state.
using Policy =
    std::function<Mat(const std::vector<double>& obs_bev, int command, const WorldState& state)>;

ClosedLoopMetrics closed_loop_run(const Policy& policy, ScenarioKind kind, std::uint64_t seed,
                                  int max_steps, const WorldParams& wp);

// Replays the reference planner from the live state.
Policy oracle_expert_policy(ScenarioKind kind, std::uint64_t seed, const WorldParams& wp);

}  // namespace lfd
