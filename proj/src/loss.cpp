#include "bird/loss.hpp"

#include "bird/error.hpp"
#include "bird/ops.hpp"

namespace bird {

ClipLoss clip_loss(Graph& g, BirdModel& model, const ClipFeatures& cf,
                   const std::vector<std::vector<Box>>& gt, int original_length, int frame_h,
                   int frame_w, const LossConfig& lc) {
    if (original_length <= 0 || original_length > static_cast<int>(cf.fused.size()))
        throw InputError("clip_loss: bad original_length " + std::to_string(original_length));
    if (static_cast<int>(gt.size()) < original_length)
        throw InputError("clip_loss: ground truth covers " + std::to_string(gt.size()) +
                         " frames, clip has " + std::to_string(original_length));

    ClipLoss cl;
    std::vector<NodeId> terms;
    std::vector<double> coeffs;
    for (int i = 0; i < original_length; ++i) {
        FrameLossReport fr;
        const detection::HeadNodes head =
            detection::head_forward(g, model.params(), cf.fused[static_cast<size_t>(i)]);
        fr.det = detection::detection_loss(g, head, gt[static_cast<size_t>(i)], lc.stride,
                                           frame_h, frame_w, lc.lambda);
        fr.det_value = g.val(fr.det.l_d).v[0];
        terms.push_back(fr.det.l_d);
        coeffs.push_back(1.0);

        if (lc.enable_stf) {
            std::vector<NodeId> parts;
            if (model.cfg.enable_bp)
                parts.push_back(ops::l1_loss(g, cf.extracted[static_cast<size_t>(i)],
                                             cf.local_backward[static_cast<size_t>(i)]));
            if (model.cfg.enable_fp) {
                // The forward branch aligns whatever it consumed: backward
                // features normally, extracted features when BP is off.
                const std::vector<NodeId>& ref =
                    model.cfg.enable_bp ? cf.backward : cf.extracted;
                parts.push_back(ops::l1_loss(g, ref[static_cast<size_t>(i)],
                                             cf.local_forward[static_cast<size_t>(i)]));
            }
            if (!parts.empty()) {
                fr.stf = ops::sum_weighted(g, parts, std::vector<double>(parts.size(), 1.0));
                fr.stf_value = g.val(fr.stf).v[0];
                terms.push_back(fr.stf);
                coeffs.push_back(lc.eta);
            }
        }
        cl.det_sum += fr.det_value;
        cl.stf_sum += fr.stf_value;
        cl.frames.push_back(fr);
    }
    cl.total = ops::sum_weighted(g, terms, coeffs);
    cl.total_value = g.val(cl.total).v[0];
    return cl;
}

double total_loss_value(const std::vector<double>& det_parts,
                        const std::vector<double>& stf_parts, double eta) {
    double t = 0.0;
    for (size_t i = 0; i < det_parts.size(); ++i)
        t += det_parts[i] + eta * (i < stf_parts.size() ? stf_parts[i] : 0.0);
    return t;
}

}  // namespace bird
