#include "lfd/world.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lfd {

namespace {

constexpr double kLaneHalfWidth = 2.0;
constexpr double kLaneGap = 3.5;
constexpr double kLateralJitter = 0.4;
constexpr double kHeadingJitter = 0.07;
constexpr double kLateralDecayDist = 6.0;
constexpr double kHazardBand = 2.4;       // |y| band treated as conflicting
constexpr double kHazardStopBack = 3.0;   // stop this far before the crossing point
constexpr double kPedSpeed = 1.5;

double smoothstep(double u) {
    u = std::clamp(u, 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

Polyline straight_line(double x0, double x1, double y, double step = 1.0) {
    Polyline out;
    for (double x = x0; x < x1; x += step) out.push_back({x, y});
    out.push_back({x1, y});
    return out;
}

// y(x) profile sampled densely along x.
template <typename F>
Polyline profile_line(double x0, double x1, F yfn, double step = 0.5) {
    Polyline out;
    for (double x = x0; x < x1; x += step) out.push_back({x, yfn(x)});
    out.push_back({x1, yfn(x1)});
    return out;
}

int scenario_salt(ScenarioKind kind) { return 0x51 + static_cast<int>(kind) * 17; }

void finish_common(ScenarioSpec& spec, Rng& rng, const WorldParams& wp) {
    spec.route_len = polyline_length(spec.route);
    const double l0 = rng.uniform(-kLateralJitter, kLateralJitter);
    const double hj = rng.uniform(-kHeadingJitter, kHeadingJitter);
    const double h0 = polyline_heading_at(spec.route, 0.0);
    const Vec2 p0 = spec.route.front();
    // offset along the left normal (-sin, cos)
    spec.start.x = p0.x - std::sin(h0) * l0;
    spec.start.y = p0.y + std::cos(h0) * l0;
    spec.start.heading = h0 + hj;
    spec.start_speed = 0.0;
    const double horizon = std::max(spec.cruise_speed, 1.0) * wp.dt;
    spec.t0_max_steps = std::min(12, static_cast<int>(0.55 * spec.route_len / horizon));
}

ScenarioSpec build_straight_follow(std::uint64_t seed, const WorldParams& wp) {
    Rng rng(Rng::mix(seed, scenario_salt(ScenarioKind::kStraightFollow)));
    ScenarioSpec spec;
    spec.kind = ScenarioKind::kStraightFollow;
    spec.seed = seed;
    spec.cruise_speed = rng.uniform(4.0, 7.0);
    spec.route = straight_line(0.0, 40.0, 0.0);
    spec.map.lanes.push_back({straight_line(-10.0, 45.0, 0.0), kLaneHalfWidth});
    const bool lead = rng.uniform() < 0.5;
    const double gap = rng.uniform(6.0, 10.0);
    if (lead) {
        AgentSpec car;
        car.program.kind = MotionKind::kLine;
        car.program.start = {gap, 0.0, 0.0};
        car.program.velocity = {spec.cruise_speed, 0.0};
        spec.agents.push_back(car);
    }
    finish_common(spec, rng, wp);
    return spec;
}

ScenarioSpec build_obstacle_overtake(std::uint64_t seed, const WorldParams& wp) {
    Rng rng(Rng::mix(seed, scenario_salt(ScenarioKind::kObstacleOvertake)));
    ScenarioSpec spec;
    spec.kind = ScenarioKind::kObstacleOvertake;
    spec.seed = seed;
    spec.cruise_speed = rng.uniform(3.5, 5.0);
    const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
    const double x_obs = 9.0;
    auto yfn = [side](double x) { return side * kLaneGap * smoothstep((x - 2.5) / 5.0); };
    spec.route = profile_line(0.0, 40.0, yfn);
    spec.map.lanes.push_back({straight_line(-10.0, 42.0, 0.0), kLaneHalfWidth});
    spec.map.lanes.push_back({straight_line(-10.0, 42.0, side * kLaneGap), kLaneHalfWidth});
    AgentSpec obstacle;
    obstacle.program.kind = MotionKind::kStationary;
    obstacle.program.start = {x_obs, 0.0, 0.0};
    spec.agents.push_back(obstacle);
    finish_common(spec, rng, wp);
    return spec;
}

ScenarioSpec build_merge(std::uint64_t seed, const WorldParams& wp) {
    Rng rng(Rng::mix(seed, scenario_salt(ScenarioKind::kMerge)));
    ScenarioSpec spec;
    spec.kind = ScenarioKind::kMerge;
    spec.seed = seed;
    spec.cruise_speed = rng.uniform(4.0, 6.0);
    const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;  // +1: ramp on the right, merge left
    auto yfn = [side](double x) {
        return -side * kLaneGap * (1.0 - smoothstep((x - 4.0) / 12.0));
    };
    spec.route = profile_line(0.0, 42.0, yfn);
    spec.map.lanes.push_back({straight_line(-14.0, 44.0, 0.0), kLaneHalfWidth});
    spec.map.lanes.push_back({profile_line(-6.0, 16.0, yfn), kLaneHalfWidth});
    AgentSpec trailing;
    trailing.program.kind = MotionKind::kLine;
    trailing.program.start = {-14.0, 0.0, 0.0};
    trailing.program.velocity = {0.8 * spec.cruise_speed, 0.0};
    spec.agents.push_back(trailing);
    finish_common(spec, rng, wp);
    return spec;
}

ScenarioSpec build_unprotected_turn(std::uint64_t seed, const WorldParams& wp) {
    Rng rng(Rng::mix(seed, scenario_salt(ScenarioKind::kUnprotectedTurn)));
    ScenarioSpec spec;
    spec.kind = ScenarioKind::kUnprotectedTurn;
    spec.seed = seed;
    spec.cruise_speed = rng.uniform(3.5, 5.0);
    const double dir = rng.uniform() < 0.5 ? 1.0 : -1.0;  // +1 left turn
    const double x_e = rng.uniform(6.0, 8.0);
    const double radius = 6.0;

    Polyline route = straight_line(0.0, x_e, 0.0);
    for (double th = 0.1; th < M_PI / 2.0 - 1e-9; th += 0.1) {
        route.push_back({x_e + radius * std::sin(th), dir * radius * (1.0 - std::cos(th))});
    }
    route.push_back({x_e + radius, dir * radius});
    const double y_end = dir * 26.0;
    for (double y = dir * (radius + 1.0); std::abs(y) < std::abs(y_end); y += dir * 1.0) {
        route.push_back({x_e + radius, y});
    }
    route.push_back({x_e + radius, y_end});
    spec.route = std::move(route);

    spec.map.lanes.push_back({straight_line(-10.0, x_e + 2.0, 0.0), kLaneHalfWidth});
    Polyline arc;
    for (double th = 0.0; th < M_PI / 2.0 + 1e-9; th += 0.05) {
        arc.push_back({x_e + radius * std::sin(th), dir * radius * (1.0 - std::cos(th))});
    }
    spec.map.lanes.push_back({arc, kLaneHalfWidth});
    Polyline exit_lane;
    for (double y = dir * 4.0; std::abs(y) <= 28.0; y += dir * 1.0) {
        exit_lane.push_back({x_e + radius, y});
    }
    spec.map.lanes.push_back({exit_lane, kLaneHalfWidth});

    spec.zones.push_back({x_e, x_e + radius * M_PI / 2.0, 3.0});

    AgentSpec crossing;
    crossing.program.kind = MotionKind::kLine;
    const bool early = rng.uniform() < 0.5;
    if (early) {
        crossing.program.start = {x_e + radius, dir * -6.0, dir > 0 ? M_PI / 2.0 : -M_PI / 2.0};
        crossing.program.velocity = {0.0, dir * 6.0};
    } else {
        crossing.program.start = {x_e + radius, dir * -45.0, dir > 0 ? M_PI / 2.0 : -M_PI / 2.0};
        crossing.program.velocity = {0.0, dir * 4.5};
    }
    spec.agents.push_back(crossing);
    finish_common(spec, rng, wp);
    return spec;
}

ScenarioSpec build_emergency_brake(std::uint64_t seed, const WorldParams& wp) {
    Rng rng(Rng::mix(seed, scenario_salt(ScenarioKind::kEmergencyBrake)));
    ScenarioSpec spec;
    spec.kind = ScenarioKind::kEmergencyBrake;
    spec.seed = seed;
    spec.cruise_speed = rng.uniform(4.0, 6.0);
    spec.route = straight_line(0.0, 30.0, 0.0);
    spec.map.lanes.push_back({straight_line(-10.0, 34.0, 0.0), kLaneHalfWidth});

    const double x_cross = rng.uniform(7.0, 9.0);
    const bool never = rng.uniform() < 0.25;
    double stand_off;
    double trigger = std::numeric_limits<double>::infinity();
    if (never) {
        stand_off = 1.30 + rng.uniform(-0.05, 0.05);
    } else {
        const int k = 2 + static_cast<int>(rng.uniform_int(3));  // crossing starts at step k
        trigger = k * wp.dt;
        stand_off = 0.25 + 0.35 * (k - 2) + rng.uniform(-0.05, 0.05);
    }
    const double y_stand = -(kLaneHalfWidth + stand_off);

    AgentSpec ped;
    ped.half_len = 0.3;
    ped.half_wid = 0.3;
    ped.program.kind = MotionKind::kCross;
    ped.program.start = {x_cross, y_stand, M_PI / 2.0};
    ped.program.velocity = {0.0, kPedSpeed};
    ped.program.trigger_time = trigger;
    ped.program.travel_limit = 3.5 - y_stand;
    spec.agents.push_back(ped);

    spec.hazard.present = true;
    spec.hazard.x_cross = x_cross;
    spec.hazard.trigger_time = trigger;
    spec.hazard.agent_index = 0;

    finish_common(spec, rng, wp);
    return spec;
}

}  // namespace

ScenarioKind scenario_from_name(const std::string& name) {
    if (name == "straight-follow") return ScenarioKind::kStraightFollow;
    if (name == "static-obstacle-overtake") return ScenarioKind::kObstacleOvertake;
    if (name == "merge") return ScenarioKind::kMerge;
    if (name == "unprotected-turn") return ScenarioKind::kUnprotectedTurn;
    if (name == "emergency-brake") return ScenarioKind::kEmergencyBrake;
    throw std::invalid_argument("unknown scenario: " + name);
}

std::string scenario_name(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::kStraightFollow: return "straight-follow";
        case ScenarioKind::kObstacleOvertake: return "static-obstacle-overtake";
        case ScenarioKind::kMerge: return "merge";
        case ScenarioKind::kUnprotectedTurn: return "unprotected-turn";
        case ScenarioKind::kEmergencyBrake: return "emergency-brake";
    }
    throw std::invalid_argument("unknown scenario kind");
}

const std::vector<ScenarioKind>& all_scenarios() {
    static const std::vector<ScenarioKind> kAll = {
        ScenarioKind::kStraightFollow, ScenarioKind::kObstacleOvertake, ScenarioKind::kMerge,
        ScenarioKind::kUnprotectedTurn, ScenarioKind::kEmergencyBrake};
    return kAll;
}

ScenarioSpec build_scenario(ScenarioKind kind, std::uint64_t seed, const WorldParams& wp) {
    switch (kind) {
        case ScenarioKind::kStraightFollow: return build_straight_follow(seed, wp);
        case ScenarioKind::kObstacleOvertake: return build_obstacle_overtake(seed, wp);
        case ScenarioKind::kMerge: return build_merge(seed, wp);
        case ScenarioKind::kUnprotectedTurn: return build_unprotected_turn(seed, wp);
        case ScenarioKind::kEmergencyBrake: return build_emergency_brake(seed, wp);
    }
    throw std::invalid_argument("unknown scenario kind");
}

WorldState initial_state(const ScenarioSpec& spec) {
    WorldState s;
    s.ego = spec.start;
    s.ego_speed = spec.start_speed;
    s.time = 0.0;
    s.map = spec.map;
    refresh_agents(spec, s);
    return s;
}

void refresh_agents(const ScenarioSpec& spec, WorldState& state) {
    state.agents.clear();
    state.agents.reserve(spec.agents.size());
    for (const AgentSpec& a : spec.agents) {
        AgentState as;
        as.pose = a.pose_at(state.time);
        as.speed = a.speed_at(state.time);
        as.half_len = a.half_len;
        as.half_wid = a.half_wid;
        state.agents.push_back(as);
    }
}

namespace {

// Is the crossing hazard blocking ego's lane ahead (now or around our arrival)?
bool hazard_conflict(const WorldState& state, const ScenarioSpec& spec, double s_ego) {
    const EmergencyInfo& hz = spec.hazard;
    if (!hz.present || !std::isfinite(hz.trigger_time)) return false;
    if (s_ego > hz.x_cross - 1.0) return false;  // already passing
    const AgentSpec& ped = spec.agents[static_cast<std::size_t>(hz.agent_index)];
    const double y0 = ped.program.start.y;
    const double t_enter = hz.trigger_time + std::max(0.0, (-kHazardBand - y0)) / kPedSpeed;
    const double t_exit = hz.trigger_time + (kHazardBand - y0) / kPedSpeed;
    const double t_now = state.time;
    if (t_exit < t_now) return false;  // already cleared
    const double t_arr = t_now + (hz.x_cross - s_ego) / std::max(state.ego_speed, 1.0);
    return t_enter <= t_arr + 1.0;
}

double allowed_speed(double s, double cruise, const std::vector<SpeedZone>& zones, double a_max) {
    // anticipate with half the braking authority so the discrete controller
    // can track the envelope without overshooting the zone entry
    const double a_brake = 0.5 * a_max;
    double v = cruise;
    for (const SpeedZone& z : zones) {
        if (s >= z.s_start && s < z.s_end) {
            v = std::min(v, z.v_limit);
        } else if (s < z.s_start) {
            v = std::min(v, std::sqrt(z.v_limit * z.v_limit + 2.0 * a_brake * (z.s_start - s)));
        }
    }
    return v;
}

}  // namespace

std::vector<Vec2> expert_plan(const WorldState& state, const ScenarioSpec& spec,
                              const WorldParams& wp) {
    const Vec2 pos{state.ego.x, state.ego.y};
    const double s0 = polyline_project(pos, spec.route);
    const double rh = polyline_heading_at(spec.route, s0);
    const Vec2 rp = polyline_point_at(spec.route, s0);
    // signed lateral offset, positive to the left of the route
    const double l0 = -std::sin(rh) * (pos.x - rp.x) + std::cos(rh) * (pos.y - rp.y);

    std::vector<SpeedZone> zones = spec.zones;
    if (hazard_conflict(state, spec, s0)) {
        zones.push_back({spec.hazard.x_cross - kHazardStopBack,
                         std::numeric_limits<double>::infinity(), 0.0});
    }

    std::vector<Vec2> plan;
    plan.reserve(static_cast<std::size_t>(wp.frames));
    double v = state.ego_speed;
    double s = s0;
    for (int j = 0; j < wp.frames; ++j) {
        double v_tgt = allowed_speed(s, spec.cruise_speed, zones, wp.a_max);
        v = std::clamp(v_tgt, v - wp.a_max * wp.dt, v + wp.a_max * wp.dt);
        v = std::clamp(v, 0.0, wp.v_max);
        for (const SpeedZone& z : zones) {
            if (z.v_limit == 0.0 && s < z.s_start) {
                v = std::min(v, std::max(0.0, (z.s_start - s) / wp.dt));
            }
        }
        s += v * wp.dt;
        const double lateral = l0 * std::max(0.0, 1.0 - (s - s0) / kLateralDecayDist);
        const double h = polyline_heading_at(spec.route, s);
        const Vec2 base = polyline_point_at(spec.route, s);
        const Vec2 world{base.x - std::sin(h) * lateral, base.y + std::cos(h) * lateral};
        plan.push_back(state.ego.to_local(world));
    }
    return plan;
}

WorldState step_expert(const WorldState& state, const ScenarioSpec& spec, const WorldParams& wp) {
    const std::vector<Vec2> plan = expert_plan(state, spec, wp);
    WorldState next = state;
    const Vec2 p1 = plan.front();
    const Vec2 world = state.ego.to_world(p1);
    const double dist = p1.norm();
    if (dist > 0.02) {
        next.ego.heading = std::atan2(world.y - state.ego.y, world.x - state.ego.x);
    }
    next.ego.x = world.x;
    next.ego.y = world.y;
    next.ego_speed = dist / wp.dt;
    next.time = state.time + wp.dt;
    refresh_agents(spec, next);
    return next;
}

}  // namespace lfd
