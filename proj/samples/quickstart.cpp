// Library walkthrough: build a dataset in memory, train a small model, score
// the test split and round-trip the weights through a checkpoint.
#include <filesystem>
#include <iostream>

#include "convrec/data/synthetic.hpp"
#include "convrec/eval/evaluator.hpp"
#include "convrec/numerics/checkpoint.hpp"
#include "convrec/train/trainer.hpp"

using namespace convrec;

int main() {
  data::synthetic::RingOptions ring;
  ring.users = 40;
  ring.items = 80;
  ring.length = 14;
  const data::Dataset ds = data::build_dataset(data::synthetic::ring_sequences(ring), {});
  std::cout << ds.stats.users << " users, " << ds.stats.items << " items, " << ds.stats.interactions
            << " interactions\n";

  model::ModelConfig mc;
  mc.dims = {ds.attribute_dim, ds.context_dim, ds.vocab.table_rows(), 32, 32, 32, 32, 32};
  mc.sequence_length = 12;
  mc.schedule = {{2, 2}, {6, 6}};
  model::ConvRecModel m(mc, 1);
  std::cout << "schedule " << model::schedule_string(m.config().effective_schedule()) << ", " << m.parameter_count() << " parameters\n";

  train::TrainConfig tc;
  tc.batch_size = 40;
  tc.learning_rate = 1e-2;
  tc.max_epochs = 60;
  tc.negatives = 20;
  tc.validation_negatives = 20;
  tc.validate_every = 10;
  const auto fit = train::fit(m, ds, tc);
  std::cout << "best epoch " << fit.best_epoch << ", validation NDCG@10 " << fit.best_val_ndcg10 << "\n";

  eval::EvalOptions eo;
  eo.protocol = data::NegativeProtocol::sampled(20);
  eo.sequence_length = mc.sequence_length;
  const auto report = eval::evaluate(m, ds, eo);
  std::cout << "test HR@10 " << report.hr_at_k << ", NDCG@10 " << report.ndcg_at_k << "\n";

  const auto path = std::filesystem::temp_directory_path() / "convrec_quickstart.cvrc";
  numerics::save_checkpoint(path, m.state());
  model::ConvRecModel restored(model::config_from_state(numerics::load_checkpoint(path)), 0);
  restored.load_state(numerics::load_checkpoint(path));
  const auto again = eval::evaluate(restored, ds, eo);
  std::cout << "reloaded HR@10 " << again.hr_at_k << (again.hr_at_k == report.hr_at_k ? " (identical)" : " (differs)")
            << "\n";
}
