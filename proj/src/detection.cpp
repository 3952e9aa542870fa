#include "bird/detection.hpp"

#include <algorithm>
#include <cmath>

#include "bird/blocks.hpp"
#include "bird/error.hpp"
#include "bird/ops.hpp"

namespace bird::detection {

namespace {

// Mean over positives of (1 - IoU(decoded prediction, assigned GT)).
// reg_rows is the gathered (n*4) vector of (tx,ty,tw,th) per positive cell.
NodeId iou_reg_loss(Graph& g, NodeId reg_rows, std::vector<std::pair<int, int>> cells,
                    std::vector<Box> gts, int stride) {
    const int n = static_cast<int>(cells.size());
    const double s = static_cast<double>(stride);

    auto decode_one = [s](const double* r, int gy, int gx) {
        Box b;
        const double cx = (gx + 0.5 + r[0]) * s;
        const double cy = (gy + 0.5 + r[1]) * s;
        const double w = std::exp(r[2]) * s;
        const double h = std::exp(r[3]) * s;
        b.x1 = cx - 0.5 * w;
        b.x2 = cx + 0.5 * w;
        b.y1 = cy - 0.5 * h;
        b.y2 = cy + 0.5 * h;
        return b;
    };

    const Tensor& rv = g.val(reg_rows);
    double loss = 0.0;
    for (int i = 0; i < n; ++i)
        loss += 1.0 - iou(decode_one(rv.v.data() + 4 * i, cells[static_cast<size_t>(i)].first,
                                     cells[static_cast<size_t>(i)].second),
                          gts[static_cast<size_t>(i)]);
    loss /= n;

    return g.make(
        Tensor::scalar(loss), {reg_rows},
        [reg_rows, cells, gts, s, n, decode_one](Graph& gg, NodeId self) {
            const double gout = gg.grad(self).v[0];
            const Tensor& rv = gg.val(reg_rows);
            Tensor& dr = gg.grad(reg_rows);
            for (int i = 0; i < n; ++i) {
                const double* r = rv.v.data() + 4 * i;
                const Box p = decode_one(r, cells[static_cast<size_t>(i)].first,
                                         cells[static_cast<size_t>(i)].second);
                const Box& q = gts[static_cast<size_t>(i)];
                const double iw = std::min(p.x2, q.x2) - std::max(p.x1, q.x1);
                const double ih = std::min(p.y2, q.y2) - std::max(p.y1, q.y1);
                if (iw <= 0.0 || ih <= 0.0) continue;  // flat region: IoU = 0
                const double inter = iw * ih;
                const double w = p.w(), h = p.h();
                const double uni = w * h + q.area() - inter;
                const double dI = (uni + inter) / (uni * uni);  // dIoU/dInter
                const double dP = -inter / (uni * uni);         // dIoU/dPredArea

                const double dI_px1 = (p.x1 > q.x1) ? -ih : 0.0;
                const double dI_px2 = (p.x2 < q.x2) ? ih : 0.0;
                const double dI_py1 = (p.y1 > q.y1) ? -iw : 0.0;
                const double dI_py2 = (p.y2 < q.y2) ? iw : 0.0;

                const double diou_dcx = dI * (dI_px1 + dI_px2);
                const double diou_dcy = dI * (dI_py1 + dI_py2);
                const double diou_dw = dI * 0.5 * (dI_px2 - dI_px1) + dP * h;
                const double diou_dh = dI * 0.5 * (dI_py2 - dI_py1) + dP * w;

                // loss_i = (1 - IoU_i)/n; cx = (..+tx)*s, w = exp(tw)*s
                const double c = -gout / n;
                dr.v[static_cast<size_t>(4 * i) + 0] += c * diou_dcx * s;
                dr.v[static_cast<size_t>(4 * i) + 1] += c * diou_dcy * s;
                dr.v[static_cast<size_t>(4 * i) + 2] += c * diou_dw * w;
                dr.v[static_cast<size_t>(4 * i) + 3] += c * diou_dh * h;
            }
        });
}

}  // namespace

void define_head(ParamStore& ps, SplitMix64& rng, int num_classes, const std::string& prefix) {
    blocks::def_conv(ps, rng, prefix + ".stem_ro", 64, 64, 3);
    // The last layers start at a sane operating point instead of noise: zero
    // regression weights make every cell propose its own stride-sized box,
    // which always overlaps the ground truth assigned to that cell and so
    // keeps the IoU term's gradient alive from the first step (the gradient
    // is flat once boxes stop overlapping); the negative objectness bias
    // encodes a background prior so early steps are not spent suppressing
    // random positive logits everywhere.
    blocks::def_conv_zero(ps, prefix + ".reg", 4, 64, 3);
    blocks::def_conv_zero(ps, prefix + ".obj", 1, 64, 3);
    ps.at(prefix + ".obj.b").value.v[0] = -2.0;
    blocks::def_conv(ps, rng, prefix + ".stem_cls", 64, 64, 3);
    blocks::def_conv_zero(ps, prefix + ".cls", num_classes, 64, 3);
}

HeadNodes head_forward(Graph& g, ParamStore& ps, NodeId fused, const std::string& prefix) {
    const NodeId ro = blocks::conv_relu(g, ps, prefix + ".stem_ro", fused);
    const NodeId cl = blocks::conv_relu(g, ps, prefix + ".stem_cls", fused);
    return {blocks::conv(g, ps, prefix + ".reg", ro), blocks::conv(g, ps, prefix + ".obj", ro),
            blocks::conv(g, ps, prefix + ".cls", cl)};
}

std::vector<Detection> decode(const Tensor& reg, const Tensor& obj, const Tensor& cls,
                              int stride, double score_thresh, double nms_iou, int frame_h,
                              int frame_w) {
    const int gh = obj.dim(1), gw = obj.dim(2);
    const int ncls = cls.dim(0);
    auto sig = [](double z) {
        return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    };

    std::vector<Detection> cand;
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx) {
            int best = 0;
            for (int c = 1; c < ncls; ++c)
                if (cls.at(c, gy, gx) > cls.at(best, gy, gx)) best = c;
            const double score = sig(obj.at(0, gy, gx)) * sig(cls.at(best, gy, gx));
            if (score < score_thresh) continue;
            const double cx = (gx + 0.5 + reg.at(0, gy, gx)) * stride;
            const double cy = (gy + 0.5 + reg.at(1, gy, gx)) * stride;
            const double w = std::exp(reg.at(2, gy, gx)) * stride;
            const double h = std::exp(reg.at(3, gy, gx)) * stride;
            Box b{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
            b.x1 = std::clamp(b.x1, 0.0, static_cast<double>(frame_w));
            b.x2 = std::clamp(b.x2, 0.0, static_cast<double>(frame_w));
            b.y1 = std::clamp(b.y1, 0.0, static_cast<double>(frame_h));
            b.y2 = std::clamp(b.y2, 0.0, static_cast<double>(frame_h));
            if (b.x2 <= b.x1 || b.y2 <= b.y1) continue;  // clipped away entirely
            cand.push_back({b, score, best});
        }

    // Sort by score descending; grid order breaks ties deterministically
    // (stable sort preserves the scan order above).
    std::stable_sort(cand.begin(), cand.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });

    std::vector<Detection> kept;
    for (const Detection& d : cand) {
        bool suppressed = false;
        for (const Detection& k : kept)
            if (iou(d.box, k.box) > nms_iou) {
                suppressed = true;
                break;
            }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

Assignment assign_targets(const std::vector<Box>& gts, int grid_h, int grid_w, int stride,
                          int frame_h, int frame_w) {
    Assignment a;
    a.cell_gt.assign(static_cast<size_t>(grid_h) * grid_w, -1);
    for (size_t j = 0; j < gts.size(); ++j) {
        const Box& b = gts[j];
        if (b.x1 < 0 || b.y1 < 0 || b.x2 > frame_w || b.y2 > frame_h || b.x1 >= b.x2 ||
            b.y1 >= b.y2)
            throw InputError("ground-truth box (" + std::to_string(b.x1) + "," +
                             std::to_string(b.y1) + "," + std::to_string(b.x2) + "," +
                             std::to_string(b.y2) + ") outside " + std::to_string(frame_w) +
                             "x" + std::to_string(frame_h) + " frame");
        const int gx = std::min(grid_w - 1, static_cast<int>(b.cx() / stride));
        const int gy = std::min(grid_h - 1, static_cast<int>(b.cy() / stride));
        const size_t cell = static_cast<size_t>(gy) * grid_w + gx;
        if (a.cell_gt[cell] >= 0) {
            a.missed.push_back(static_cast<int>(j));
            a.cells.emplace_back(-1, -1);
        } else {
            a.cell_gt[cell] = static_cast<int>(j);
            a.cells.emplace_back(gy, gx);
        }
    }
    return a;
}

FrameLoss detection_loss(Graph& g, const HeadNodes& head, const std::vector<Box>& gts,
                         int stride, int frame_h, int frame_w, double lambda) {
    const Tensor& obj = g.val(head.obj);
    const int gh = obj.dim(1), gw = obj.dim(2);
    const Assignment a = assign_targets(gts, gh, gw, stride, frame_h, frame_w);

    std::vector<std::pair<int, int>> pos_cells;
    std::vector<Box> pos_gts;
    for (size_t j = 0; j < gts.size(); ++j)
        if (a.cells[j].first >= 0) {
            pos_cells.push_back(a.cells[j]);
            pos_gts.push_back(gts[j]);
        }

    FrameLoss fl;
    fl.positives = static_cast<int>(pos_cells.size());
    fl.missed = static_cast<int>(a.missed.size());

    if (pos_cells.empty()) {
        fl.l_reg = g.constant(Tensor::scalar(0.0));
        fl.l_cls = g.constant(Tensor::scalar(0.0));
    } else {
        fl.l_reg = iou_reg_loss(g, ops::gather_cells(g, head.reg, pos_cells), pos_cells,
                                pos_gts, stride);
        // single-class one-hot targets: the true class logit (channel 0 of the
        // gathered rows for class_id 0) should saturate to 1
        const int ncls = g.val(head.cls).dim(0);
        Tensor cls_t({fl.positives * ncls});
        for (int i = 0; i < fl.positives; ++i) cls_t.v[static_cast<size_t>(i) * ncls] = 1.0;
        fl.l_cls = ops::bce_with_logits(g, ops::gather_cells(g, head.cls, pos_cells),
                                        std::move(cls_t));
    }

    Tensor obj_t({1, gh, gw});
    for (size_t cell = 0; cell < a.cell_gt.size(); ++cell)
        if (a.cell_gt[cell] >= 0) obj_t.v[cell] = 1.0;
    // Normalized by the positive count, not the cell count: averaging over
    // the grid would weight the lone positive of a small-target frame by
    // 1/(gh*gw) and stall objectness learning at the background base rate.
    const double per_positive =
        static_cast<double>(gh) * gw / std::max(1, fl.positives);
    fl.l_obj = ops::sum_weighted(g, {ops::bce_with_logits(g, head.obj, std::move(obj_t))},
                                 {per_positive});

    fl.l_d = ops::sum_weighted(g, {fl.l_reg, fl.l_cls, fl.l_obj}, {lambda, 1.0, 1.0});
    return fl;
}

}  // namespace bird::detection
