#include "lfd/losses.hpp"

#include <stdexcept>

namespace lfd {

Var map_signed_distance(Tape& tape, Var points, const LocalMap& map_local) {
    const Mat& p = points.v();
    const int n = static_cast<int>(p.rows());
    Mat sd(n, 1);
    for (int i = 0; i < n; ++i) sd(i, 0) = map_local.signed_distance({p(i, 0), p(i, 1)});
    const bool req = tape.requires_grad(points.id);
    const int id = tape.op(std::move(sd), req);
    if (req) {
        LocalMap map_copy = map_local;
        tape.set_back(id, [id, points, map_copy = std::move(map_copy)](Tape& tp) {
            const Mat& g = tp.grad(id);
            const Mat& pv = tp.value(points.id);
            Mat gp(pv.rows(), 2);
            for (int i = 0; i < pv.rows(); ++i) {
                const Vec2 grad = map_copy.signed_distance_grad({pv(i, 0), pv(i, 1)});
                gp(i, 0) = g(i, 0) * grad.x;
                gp(i, 1) = g(i, 0) * grad.y;
            }
            tp.add_grad(points.id, gp);
        });
    }
    return Var{&tape, id};
}

PlanLossVars plan_loss(Tape& tape, Var traj_modes, int command, const Mat& gt_traj,
                       const LocalMap& map_local, const Mat& agent_futures, int num_agents,
                       const PlanLossConfig& cfg, int frames, int commands) {
    if (command < 0 || command >= commands) {
        throw std::invalid_argument("plan_loss: command out of range: " + std::to_string(command));
    }
    if (traj_modes.rows() != frames || traj_modes.cols() != 2 * commands) {
        throw std::invalid_argument("plan_loss: trajectory set shape mismatch");
    }
    Var traj = slice_cols(traj_modes, 2 * command, 2);  // F x 2; other modes get no gradient

    PlanLossVars out;
    Var diff = sub(traj, make_const(tape, gt_traj));
    Var mse = scale(sum_all(square(diff)), 1.0 / static_cast<double>(frames));

    Var bd;
    if (!map_local.empty()) {
        Var sd = map_signed_distance(tape, traj, map_local);
        Var hinge = relu(add_scalar(scale(sd, -1.0), cfg.m_bd));  // max(0, m_bd - sd)
        bd = scale(sum_all(hinge), 1.0 / static_cast<double>(frames));
    } else {
        bd = make_const(tape, Mat::Zero(1, 1));
    }

    Var col = make_const(tape, Mat::Zero(1, 1));
    if (num_agents > 0) {
        if (agent_futures.rows() != num_agents * frames || agent_futures.cols() != 2) {
            throw std::invalid_argument("plan_loss: agent futures shape mismatch");
        }
        for (int a = 0; a < num_agents; ++a) {
            Var d = row_l2norm(
                sub(traj, make_const(tape, Mat(agent_futures.middleRows(a * frames, frames)))),
                1e-12);
            Var hinge = relu(add_scalar(scale(d, -1.0), cfg.m_col));
            col = add(col, sum_all(hinge));
        }
        col = scale(col, 1.0 / static_cast<double>(frames * num_agents));
    }

    out.mse = mse.v()(0, 0);
    out.bd = bd.v()(0, 0);
    out.col = col.v()(0, 0);
    out.total = add(add(scale(mse, cfg.w_mse), scale(bd, cfg.w_bd)), scale(col, cfg.w_col));
    return out;
}

Var template_ce_loss(Var logits, int ctx_len, const std::vector<int>& template_ids) {
    if (ctx_len < 1) throw std::invalid_argument("template_ce_loss: empty context");
    Var rows = slice_rows(logits, ctx_len - 1, static_cast<int>(template_ids.size()));
    return cross_entropy_rows(rows, template_ids);
}

bool LossBreakdown::has(const std::string& name) const {
    for (const auto& [k, v] : terms) {
        if (k == name) return true;
    }
    return false;
}

double LossBreakdown::get(const std::string& name) const {
    for (const auto& [k, v] : terms) {
        if (k == name) return v;
    }
    return 0.0;
}

EpisodeLossVars episode_loss(Tape& tape, TapeParams& p, Model& model, const EpisodeData& ep,
                             const LossWeights& w, bool training, Rng* z_rng,
                             const AuxLossHook* aux) {
    EpisodeLossVars out;
    out.fwd = model.forward(tape, p, ep, training, z_rng);

    std::vector<Var> parts;
    const ModelConfig& cfg = model.cfg;

    if (cfg.variant != Variant::kBase) {
        if (static_cast<int>(ep.teacher_targets.size()) != cfg.frames) {
            throw std::invalid_argument("episode_loss: missing teacher targets");
        }
        const VisionLossVars vis = vision_loss(tape, out.fwd.v_pred, ep.teacher_targets, w.w_c, w.w_r);
        out.breakdown.terms.emplace_back("l_vis", vis.total.v()(0, 0));
        parts.push_back(vis.total);
    }

    const PlanLossVars plan =
        plan_loss(tape, out.fwd.tau_c, ep.command, ep.gt_traj, ep.map_local, ep.agent_futures,
                  ep.num_agents, w.plan, cfg.frames, cfg.commands);
    out.breakdown.terms.emplace_back("l_plan", plan.total.v()(0, 0));
    parts.push_back(plan.total);

    if (out.fwd.has_final) {
        const PlanLossVars plan_r =
            plan_loss(tape, out.fwd.tau_f, ep.command, ep.gt_traj, ep.map_local, ep.agent_futures,
                      ep.num_agents, w.plan, cfg.frames, cfg.commands);
        out.breakdown.terms.emplace_back("l_plan_r", plan_r.total.v()(0, 0));
        parts.push_back(plan_r.total);
    }

    const Var ce = template_ce_loss(out.fwd.logits, out.fwd.ctx_len,
                                    model.active_template().token_ids);
    out.breakdown.terms.emplace_back("l_ce", ce.v()(0, 0));
    parts.push_back(ce);

    if (aux != nullptr && *aux) {
        Var a = (*aux)(tape, ep);
        out.breakdown.terms.emplace_back("l_aux", a.v()(0, 0));
        parts.push_back(a);
    } else {
        out.breakdown.terms.emplace_back("l_aux", 0.0);
    }

    Var total = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) total = add(total, parts[i]);
    out.total = total;
    out.breakdown.total = total.v()(0, 0);
    return out;
}

}  // namespace lfd
