// Train a toy model on synthetic scenes and score its cloud removal on held-out ones.
//
//   quickstart [steps] [out_dir]

#include <cstdlib>
#include <iostream>
#include <string>

#include "cloudfusion/metrics.hpp"
#include "cloudfusion/raster_io.hpp"
#include "cloudfusion/simulate.hpp"
#include "cloudfusion/train.hpp"

using namespace cloudfusion;

int main(int argc, char** argv) {
    const long steps = argc > 1 ? std::atol(argv[1]) : 100;
    const std::string out_dir = argc > 2 ? argv[2] : "";

    SceneConfig scenes;
    scenes.size = 32;
    scenes.seed = 1;
    const auto train = synthetic_triplets(24, scenes);
    const auto test = synthetic_triplets(16, scenes, 24);

    TrainConfig cfg;
    cfg.model = ModelConfig::toy();
    cfg.schedule = TrainSchedule{8, 4};
    cfg.max_steps = steps;
    cfg.crop = 32;
    cfg.paired_fraction = 0.2;
    cfg.validation_fraction = 0.0;
    cfg.seed = 1;
    cfg.out_dir = out_dir;

    Trainer<float> trainer(cfg);
    trainer.fit(train);
    const auto& last = trainer.history().back();
    std::cout << "trained " << trainer.history().size() << " steps, final generator loss "
              << format_metric(last.total, 4) << "\n";

    std::vector<Raster> preds, cloudy, targets;
    for (const auto& t : test) {
        const Raster pred = remove_clouds(trainer.model().g_s1s2, t.s1, t.s2_cloudy, triplet_mask(t));
        preds.push_back(to_unit(pred));
        cloudy.push_back(to_unit(t.s2_cloudy));
        targets.push_back(to_unit(t.s2_cloudfree));
    }
    if (!out_dir.empty()) {
        write_preview(test[0].s2_cloudy, out_dir + "/cloudy.ppm");
        write_preview(remove_clouds(trainer.model().g_s1s2, test[0].s1, test[0].s2_cloudy, triplet_mask(test[0])),
                      out_dir + "/removed.ppm");
    }

    std::cout << "cloudy input\n" << format_report_text(pixel_report(cloudy, targets));
    std::cout << "model output\n" << format_report_text(pixel_report(preds, targets));
    return 0;
}
