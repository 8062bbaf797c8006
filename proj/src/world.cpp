#include "lfd/world.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lfd {

// ---- geometry --------------------------------------------------------------

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.dot(ab);
    if (len2 <= 0.0) return (p - a).norm();
    double t = (p - a).dot(ab) / len2;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + ab * t)).norm();
}

double polyline_distance(const Vec2& p, const Polyline& line) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        best = std::min(best, point_segment_distance(p, line[i], line[i + 1]));
    }
    if (line.size() == 1) best = (p - line[0]).norm();
    return best;
}

double polyline_length(const Polyline& line) {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < line.size(); ++i) s += (line[i + 1] - line[i]).norm();
    return s;
}

double polyline_project(const Vec2& p, const Polyline& line) {
    double best = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    double s_at = 0.0;
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        const Vec2 a = line[i], b = line[i + 1];
        const Vec2 ab = b - a;
        const double len = ab.norm();
        double t = len > 0.0 ? std::clamp((p - a).dot(ab) / (len * len), 0.0, 1.0) : 0.0;
        const double d = (p - (a + ab * t)).norm();
        if (d < best) {
            best = d;
            best_s = s_at + t * len;
        }
        s_at += len;
    }
    return best_s;
}

Vec2 polyline_point_at(const Polyline& line, double s) {
    if (line.empty()) return {};
    if (s <= 0.0) return line.front();
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        const double len = (line[i + 1] - line[i]).norm();
        if (s <= len) {
            const double t = len > 0.0 ? s / len : 0.0;
            return line[i] + (line[i + 1] - line[i]) * t;
        }
        s -= len;
    }
    return line.back();
}

double polyline_heading_at(const Polyline& line, double s) {
    if (line.size() < 2) return 0.0;
    if (s < 0.0) s = 0.0;
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        const double len = (line[i + 1] - line[i]).norm();
        if (s <= len || i + 2 == line.size()) {
            const Vec2 d = line[i + 1] - line[i];
            return std::atan2(d.y, d.x);
        }
        s -= len;
    }
    const Vec2 d = line.back() - line[line.size() - 2];
    return std::atan2(d.y, d.x);
}

double LocalMap::signed_distance(const Vec2& p) const {
    double best = -std::numeric_limits<double>::infinity();
    for (const LanePolyline& lane : lanes) {
        best = std::max(best, lane.half_width - polyline_distance(p, lane.points));
    }
    return best;
}

Vec2 LocalMap::signed_distance_grad(const Vec2& p) const {
    // argmax corridor, then gradient of (hw - dist) = -d(dist)/dp.
    double best = -std::numeric_limits<double>::infinity();
    const LanePolyline* pick = nullptr;
    for (const LanePolyline& lane : lanes) {
        const double sd = lane.half_width - polyline_distance(p, lane.points);
        if (sd > best) {
            best = sd;
            pick = &lane;
        }
    }
    if (pick == nullptr) return {0.0, 0.0};
    // nearest point on the picked centerline
    double bestd = std::numeric_limits<double>::infinity();
    Vec2 nearest = pick->points.front();
    const Polyline& line = pick->points;
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        const Vec2 a = line[i], b = line[i + 1];
        const Vec2 ab = b - a;
        const double len2 = ab.dot(ab);
        const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        const Vec2 q = a + ab * t;
        const double d = (p - q).norm();
        if (d < bestd) {
            bestd = d;
            nearest = q;
        }
    }
    if (bestd < 1e-9) return {0.0, 0.0};
    return (p - nearest) * (-1.0 / bestd);
}

// ---- agents ----------------------------------------------------------------

Pose AgentSpec::pose_at(double t) const {
    switch (program.kind) {
        case MotionKind::kStationary:
            return program.start;
        case MotionKind::kLine: {
            Pose p = program.start;
            p.x += program.velocity.x * t;
            p.y += program.velocity.y * t;
            return p;
        }
        case MotionKind::kCross: {
            Pose p = program.start;
            const double speed = program.velocity.norm();
            if (speed <= 0.0 || !std::isfinite(program.trigger_time)) return p;
            const double moving = std::clamp(t - program.trigger_time, 0.0,
                                             program.travel_limit / speed);
            p.x += program.velocity.x * moving;
            p.y += program.velocity.y * moving;
            return p;
        }
    }
    return program.start;
}

double AgentSpec::speed_at(double t) const {
    switch (program.kind) {
        case MotionKind::kStationary:
            return 0.0;
        case MotionKind::kLine:
            return program.velocity.norm();
        case MotionKind::kCross: {
            const double speed = program.velocity.norm();
            if (speed <= 0.0 || !std::isfinite(program.trigger_time)) return 0.0;
            const double dur = program.travel_limit / speed;
            return (t >= program.trigger_time && t < program.trigger_time + dur) ? speed : 0.0;
        }
    }
    return 0.0;
}

// ---- rasterization ----------------------------------------------------------

namespace {

bool point_in_agent(const Vec2& p, const AgentState& a) {
    const Pose& q = a.pose;
    const double c = std::cos(q.heading), s = std::sin(q.heading);
    const double dx = p.x - q.x, dy = p.y - q.y;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    return std::abs(lx) <= a.half_len && std::abs(ly) <= a.half_wid;
}

// One bev frame (bev_channels planes) rendered in the frame of `state.ego`.
void render_bev_frame(const WorldState& state, const WorldParams& wp, double* out) {
    const int H = wp.bev_h, W = wp.bev_w, C = wp.bev_channels;
    const double ego_speed_norm = std::clamp(state.ego_speed / wp.v_max, 0.0, 1.0);
    for (int r = 0; r < H; ++r) {
        const double x = (wp.bev_ego_row - 0.5 - r) * wp.meters_per_pixel;
        for (int c = 0; c < W; ++c) {
            const double y = (W / 2.0 - 0.5 - c) * wp.meters_per_pixel;
            const Vec2 world{state.ego.to_world({x, y})};
            double* px = out + (r * W + c) * C;
            px[0] = (!state.map.empty() && state.map.signed_distance(world) >= 0.0) ? 1.0 : 0.0;
            double occ = 0.0, spd = 0.0;
            for (const AgentState& a : state.agents) {
                if (point_in_agent(world, a)) {
                    occ = 1.0;
                    spd = std::max(spd, std::clamp(a.speed / wp.v_max, 0.0, 1.0));
                }
            }
            px[1] = occ;
            px[2] = spd;
            px[3] = ego_speed_norm;
        }
    }
}

}  // namespace

std::vector<double> render_front(const WorldState& state, const WorldParams& wp) {
    const int H = wp.front_h, W = wp.front_w;
    std::vector<double> out(static_cast<std::size_t>(H * W), 0.0);
    for (int r = 0; r < H; ++r) {
        const double x = (H - 0.5 - r) * wp.meters_per_pixel;
        for (int c = 0; c < W; ++c) {
            const double y = (W / 2.0 - 0.5 - c) * wp.meters_per_pixel;
            const Vec2 world{state.ego.to_world({x, y})};
            double v = 0.0;
            if (!state.map.empty() && state.map.signed_distance(world) >= 0.0) v = 0.3;
            for (const AgentState& a : state.agents) {
                if (point_in_agent(world, a)) {
                    v = 1.0;
                    break;
                }
            }
            out[static_cast<std::size_t>(r * W + c)] = v;
        }
    }
    return out;
}

std::vector<double> render_bev(const WorldState& state, const std::vector<WorldState>& history,
                               const WorldParams& wp) {
    const int H = wp.bev_h, W = wp.bev_w, C = wp.bev_channels;
    const int frames = wp.history_steps + 1;
    std::vector<double> out(static_cast<std::size_t>(H * W * frames * C), 0.0);
    std::vector<double> frame(static_cast<std::size_t>(H * W * C));
    for (int f = 0; f < frames; ++f) {
        const WorldState* s = &state;
        if (f > 0) {
            const int idx = std::min<int>(f - 1, static_cast<int>(history.size()) - 1);
            if (idx >= 0) s = &history[static_cast<std::size_t>(idx)];
        }
        render_bev_frame(*s, wp, frame.data());
        for (int px = 0; px < H * W; ++px) {
            for (int ch = 0; ch < C; ++ch) {
                out[static_cast<std::size_t>(px * frames * C + f * C + ch)] =
                    frame[static_cast<std::size_t>(px * C + ch)];
            }
        }
    }
    return out;
}

// ---- commands ----------------------------------------------------------------

namespace {

struct TrajShape {
    double total = 0.0;
    double heading_end = 0.0;
    double lateral_end = 0.0;
};

TrajShape traj_shape(const std::vector<Vec2>& traj) {
    TrajShape s;
    Vec2 prev{0.0, 0.0};
    for (const Vec2& p : traj) {
        s.total += (p - prev).norm();
        prev = p;
    }
    if (!traj.empty()) s.lateral_end = traj.back().y;
    // direction of the last non-degenerate stretch
    Vec2 d{0.0, 0.0};
    if (traj.size() >= 3) d = traj.back() - traj[traj.size() - 3];
    if (d.norm() < 0.15 && traj.size() >= 1) d = traj.back();
    if (d.norm() > 1e-9) s.heading_end = std::atan2(d.y, d.x);
    return s;
}

constexpr double kTurnThreshold = 0.7;   // rad
constexpr double kLaneThreshold = 1.5;   // m
constexpr double kCrawlTotal = 0.6;      // m

}  // namespace

bool command_consistent(int command, const std::vector<Vec2>& traj) {
    const TrajShape s = traj_shape(traj);
    if (s.total < kCrawlTotal) return command == static_cast<int>(Command::kFollow);
    if (s.heading_end > kTurnThreshold) return command == static_cast<int>(Command::kLeft);
    if (s.heading_end < -kTurnThreshold) return command == static_cast<int>(Command::kRight);
    if (s.lateral_end >= kLaneThreshold) return command == static_cast<int>(Command::kLaneLeft);
    if (s.lateral_end <= -kLaneThreshold) return command == static_cast<int>(Command::kLaneRight);
    return command == static_cast<int>(Command::kStraight) ||
           command == static_cast<int>(Command::kFollow);
}

Command classify_command(const std::vector<Vec2>& traj, ScenarioKind kind) {
    const TrajShape s = traj_shape(traj);
    if (s.total < kCrawlTotal) return Command::kFollow;
    if (s.heading_end > kTurnThreshold) return Command::kLeft;
    if (s.heading_end < -kTurnThreshold) return Command::kRight;
    if (s.lateral_end >= kLaneThreshold) return Command::kLaneLeft;
    if (s.lateral_end <= -kLaneThreshold) return Command::kLaneRight;
    const bool cruise_kind =
        kind == ScenarioKind::kStraightFollow || kind == ScenarioKind::kEmergencyBrake;
    return cruise_kind ? Command::kFollow : Command::kStraight;
}

// ---- episodes ----------------------------------------------------------------

Episode generate_episode(std::uint64_t seed, ScenarioKind kind, const WorldParams& wp) {
    const ScenarioSpec spec = build_scenario(kind, seed, wp);
    Rng rng(Rng::mix(seed, 0x0ff5e7 + static_cast<std::uint64_t>(kind)));
    const int t0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.t0_max_steps) + 1));

    std::vector<WorldState> states;
    states.push_back(initial_state(spec));
    for (int k = 0; k < t0 + wp.frames; ++k) {
        states.push_back(step_expert(states.back(), spec, wp));
    }

    const WorldState& now = states[static_cast<std::size_t>(t0)];
    std::vector<WorldState> hist;
    for (int h = 1; h <= wp.history_steps; ++h) {
        hist.push_back(states[static_cast<std::size_t>(std::max(0, t0 - h))]);
    }

    Episode ep;
    ep.seed = seed;
    ep.scenario = kind;
    const std::vector<double> obs = render_bev(now, hist, wp);
    ep.obs_bev.assign(obs.begin(), obs.end());

    const std::vector<Vec2> plan = expert_plan(now, spec, wp);
    ep.gt_traj = Mat(wp.frames, 2);
    for (int j = 0; j < wp.frames; ++j) {
        ep.gt_traj(j, 0) = plan[static_cast<std::size_t>(j)].x;
        ep.gt_traj(j, 1) = plan[static_cast<std::size_t>(j)].y;
    }
    ep.command = static_cast<int>(classify_command(plan, kind));

    ep.future_front.reserve(static_cast<std::size_t>(wp.frames * wp.front_h * wp.front_w));
    for (int j = 1; j <= wp.frames; ++j) {
        const std::vector<double> fr = render_front(states[static_cast<std::size_t>(t0 + j)], wp);
        ep.future_front.insert(ep.future_front.end(), fr.begin(), fr.end());
    }

    ep.num_agents = static_cast<int>(spec.agents.size());
    ep.agent_futures = Mat(ep.num_agents * wp.frames, 2);
    for (int a = 0; a < ep.num_agents; ++a) {
        for (int j = 1; j <= wp.frames; ++j) {
            const Pose pa = spec.agents[static_cast<std::size_t>(a)].pose_at(now.time + j * wp.dt);
            const Vec2 local = now.ego.to_local({pa.x, pa.y});
            ep.agent_futures(a * wp.frames + j - 1, 0) = local.x;
            ep.agent_futures(a * wp.frames + j - 1, 1) = local.y;
        }
    }

    for (const LanePolyline& lane : spec.map.lanes) {
        LanePolyline local;
        local.half_width = lane.half_width;
        local.points.reserve(lane.points.size());
        for (const Vec2& p : lane.points) local.points.push_back(now.ego.to_local(p));
        ep.map_local.push_back(std::move(local));
    }

    if (spec.hazard.present) {
        ep.hazard_trigger = spec.hazard.trigger_time - now.time;
    }
    return ep;
}

// ---- closed loop ----------------------------------------------------------------

double toy_driving_score(double completion, bool collided, bool off_road) {
    return 100.0 * completion * (collided ? 0.5 : 1.0) * (off_road ? 0.7 : 1.0);
}

namespace {

bool obb_overlap(const Pose& pa, double al, double aw, const Pose& pb, double bl, double bw) {
    // separating axis test on both rectangles' axes
    const Vec2 axes[4] = {
        {std::cos(pa.heading), std::sin(pa.heading)},
        {-std::sin(pa.heading), std::cos(pa.heading)},
        {std::cos(pb.heading), std::sin(pb.heading)},
        {-std::sin(pb.heading), std::cos(pb.heading)},
    };
    const Vec2 d{pb.x - pa.x, pb.y - pa.y};
    for (const Vec2& ax : axes) {
        const double ra = al * std::abs(ax.dot({std::cos(pa.heading), std::sin(pa.heading)})) +
                          aw * std::abs(ax.dot({-std::sin(pa.heading), std::cos(pa.heading)}));
        const double rb = bl * std::abs(ax.dot({std::cos(pb.heading), std::sin(pb.heading)})) +
                          bw * std::abs(ax.dot({-std::sin(pb.heading), std::cos(pb.heading)}));
        if (std::abs(d.dot(ax)) > ra + rb) return false;
    }
    return true;
}

constexpr double kEgoHalfLen = 1.4;
constexpr double kEgoHalfWid = 0.8;

}  // namespace

ClosedLoopMetrics closed_loop_run(const Policy& policy, ScenarioKind kind, std::uint64_t seed,
                                  int max_steps, const WorldParams& wp) {
    const ScenarioSpec spec = build_scenario(kind, seed, wp);
    WorldState state = initial_state(spec);
    std::vector<WorldState> hist(static_cast<std::size_t>(wp.history_steps), state);

    ClosedLoopMetrics m;
    double max_progress = std::max(0.0, polyline_project({state.ego.x, state.ego.y}, spec.route));
    bool reached = false;

    for (int step = 0; step < max_steps; ++step) {
        const std::vector<double> obs = render_bev(state, hist, wp);
        const int cmd = static_cast<int>(classify_command(expert_plan(state, spec, wp), kind));
        Mat traj = policy(obs, cmd, state);
        if (traj.rows() < 1 || traj.cols() != 2 || !traj.allFinite()) {
            m.valid = false;
            break;
        }

        // pure pursuit toward the first waypoint past the lookahead
        Vec2 target{traj(traj.rows() - 1, 0), traj(traj.rows() - 1, 1)};
        for (int j = 0; j < traj.rows(); ++j) {
            const Vec2 p{traj(j, 0), traj(j, 1)};
            if (p.norm() >= wp.lookahead) {
                target = p;
                break;
            }
        }
        const double ld2 = target.x * target.x + target.y * target.y;
        const double curvature = ld2 > 1e-12 ? 2.0 * target.y / ld2 : 0.0;
        double v_cmd = Vec2{traj(0, 0), traj(0, 1)}.norm() / wp.dt;
        v_cmd = std::clamp(v_cmd, 0.0, wp.v_max);
        v_cmd = std::clamp(v_cmd, state.ego_speed - wp.a_max * wp.dt,
                           state.ego_speed + wp.a_max * wp.dt);
        v_cmd = std::max(v_cmd, 0.0);

        const WorldState prev = state;
        const int substeps = 5;
        const double h = wp.dt / substeps;
        bool stop = false;
        for (int k = 0; k < substeps && !stop; ++k) {
            state.ego.heading += v_cmd * curvature * h;
            state.ego.x += v_cmd * std::cos(state.ego.heading) * h;
            state.ego.y += v_cmd * std::sin(state.ego.heading) * h;
            const double t_sub = state.time + (k + 1) * h;
            for (const AgentSpec& a : spec.agents) {
                const Pose pa = a.pose_at(t_sub);
                if (obb_overlap(state.ego, kEgoHalfLen, kEgoHalfWid, pa, a.half_len, a.half_wid)) {
                    m.collided = true;
                    stop = true;
                    break;
                }
            }
        }
        state.ego_speed = v_cmd;
        state.time += wp.dt;
        refresh_agents(spec, state);
        hist.insert(hist.begin(), prev);
        hist.resize(static_cast<std::size_t>(wp.history_steps));

        max_progress = std::max(max_progress, polyline_project({state.ego.x, state.ego.y}, spec.route));
        m.steps = step + 1;
        if (m.collided) break;
        if (state.map.signed_distance({state.ego.x, state.ego.y}) < 0.0) {
            m.off_road = true;
            break;
        }
        if (max_progress >= spec.route_len - 0.5) {
            reached = true;
            break;
        }
    }

    m.route_completion = reached ? 1.0 : std::clamp(max_progress / spec.route_len, 0.0, 1.0);
    m.success = m.valid && !m.collided && !m.off_road && m.route_completion == 1.0;
    m.toy_driving_score = toy_driving_score(m.route_completion, m.collided, m.off_road);
    return m;
}

Policy oracle_expert_policy(ScenarioKind kind, std::uint64_t seed, const WorldParams& wp) {
    ScenarioSpec spec = build_scenario(kind, seed, wp);
    return [spec = std::move(spec), wp](const std::vector<double>&, int,
                                        const WorldState& state) {
        const std::vector<Vec2> plan = expert_plan(state, spec, wp);
        Mat m(static_cast<int>(plan.size()), 2);
        for (std::size_t j = 0; j < plan.size(); ++j) {
            m(static_cast<int>(j), 0) = plan[j].x;
            m(static_cast<int>(j), 1) = plan[j].y;
        }
        return m;
    };
}

}  // namespace lfd
