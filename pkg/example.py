import numpy as np

from otsvad import ModelConfig, OnlineDiarizer, OtsVadModel, StreamConfig
from otsvad.audio.vad import VadSegments
from otsvad.streaming import ModelDetector
from otsvad.training.corpus import prepare_signal
from otsvad.training.simulate import simulate_conversations, synthetic_speaker_pool

rng = np.random.default_rng(7)

# one 20 s, three-speaker conversation built from synthetic talkers
pool = synthetic_speaker_pool(3, rng)
mixture = simulate_conversations(pool, 1, 250, 4, rng)[0]
recording = prepare_signal("demo", mixture.audio, [], VadSegments([(0.0, mixture.audio.duration_s)]))

model = OtsVadModel(ModelConfig())
diarizer = OnlineDiarizer(ModelDetector(model), StreamConfig(block_length_s=4.0, block_shift_s=0.4))

# feed 0.4 s of feature frames at a time; every push yields the frames whose
# probabilities became available
for offset in range(0, recording.features.shape[-1], 40):
    for increment in diarizer.push(recording.features[..., offset : offset + 40]):
        print(increment.to_lines()[0])
diarizer.close()

labels = diarizer.finalize(recording.timeline, recording.num_original_frames)
for segment in labels.to_segments("demo"):
    print(segment.to_line())
