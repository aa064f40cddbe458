#pragma once

#include "elda/regularizers.hpp"
#include "elda/solver.hpp"

#include <optional>

namespace elda {

// The reconstruction objective phi_eps = 1/2 ||Ax - b||^2 + r_hat_eps +
// lambda r_bar, flattened to vectors for the solver. The similarity graph
// is anchored at the supplied initializer (frozen mode keeps it; exact
// mode keeps only its bandwidth and layout and rebuilds per evaluation).
struct CTObjective {
    LinearFidelity fid;
    FilterBank fb;
    RegularizerConfig cfg;
    std::optional<SimilarityGraph> graph;
    Index image_n = 0;
    Scalar pixel_size = 1.0;

    static CTObjective prepare(LinearFidelity fidelity, FilterBank bank, RegularizerConfig rcfg,
                               const Image& anchor) {
        validate(fidelity);
        validate(bank);
        validate(rcfg);
        validate(anchor);
        CTObjective obj;
        obj.fid = std::move(fidelity);
        obj.fb = std::move(bank);
        obj.cfg = rcfg;
        obj.image_n = anchor.width;
        obj.pixel_size = anchor.pixel_size;
        if (rcfg.lambda > 0.0) obj.graph = prepare_graph(anchor, obj.fb, rcfg);
        return obj;
    }

    Index m() const { return image_n * image_n; }

    Image to_image(const Vector& v) const {
        Image im(image_n, image_n, pixel_size);
        im.values = v;
        return im;
    }

    const SimilarityGraph* graph_ptr() const { return graph ? &*graph : nullptr; }

    Evaluation evaluate(const Vector& xv, Scalar eps) const {
        const PhiEval pe = phi_eps(to_image(xv), fid, fb, cfg, eps, graph_ptr());
        Evaluation ev;
        ev.value = pe.value;
        ev.grad = pe.grad.values;
        ev.grad_f = pe.grad_f.values;
        return ev;
    }

    Scalar value(const Vector& xv, Scalar eps) const {
        return phi_eps_value(to_image(xv), fid, fb, cfg, eps, graph_ptr());
    }

    Vector grad_reg(const Vector& zv, Scalar eps, GradMode mode) const {
        return grad_reg_eps(to_image(zv), fb, cfg, eps, graph_ptr(), mode).values;
    }

    // Unsmoothed objective, for comparing runs with different eps paths.
    Scalar phi_true(const Vector& xv) const {
        return phi_true_value(to_image(xv), fid, fb, cfg, graph_ptr());
    }
};

} // namespace elda
