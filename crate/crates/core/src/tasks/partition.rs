use rand::seq::SliceRandom;

use super::{Dataset, TaskError};
use crate::rng::rng_from_u64;
use crate::scalar::Scalar;
use crate::topology::Topology;

/// Label-shard partition: every device receives points from exactly
/// `labels_per_device` distinct classes, and no point is given to two devices.
///
/// Class sets are assigned cyclically over a seeded permutation of the labels,
/// which keeps per-class demand balanced to within one device. Each class's
/// points are shuffled and split into near-equal chunks among its holders.
pub fn partition_noniid<T: Scalar>(
    dataset: &Dataset<T>,
    topology: &Topology,
    labels_per_device: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, TaskError> {
    let classes = dataset.num_classes();
    if labels_per_device == 0 || labels_per_device > classes {
        return Err(TaskError::InfeasiblePartition(format!(
            "labels_per_device {labels_per_device} must be in [1, {classes}]"
        )));
    }
    let devices = topology.num_devices();
    let mut rng = rng_from_u64(seed);
    let mut label_order: Vec<usize> = (0..classes).collect();
    label_order.shuffle(&mut rng);

    let device_labels: Vec<Vec<usize>> = (0..devices)
        .map(|i| {
            (0..labels_per_device)
                .map(|j| label_order[(i * labels_per_device + j) % classes])
                .collect()
        })
        .collect();

    let mut holders: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, labels) in device_labels.iter().enumerate() {
        for &y in labels {
            holders[y].push(i);
        }
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (idx, &y) in dataset.labels().iter().enumerate() {
        by_class[y].push(idx);
    }

    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); devices];
    for y in 0..classes {
        let demand = holders[y].len();
        if demand == 0 {
            continue;
        }
        let points = &mut by_class[y];
        if points.len() < demand {
            return Err(TaskError::InfeasiblePartition(format!(
                "class {y} has {} points but {demand} devices need it",
                points.len()
            )));
        }
        points.shuffle(&mut rng);
        let base = points.len() / demand;
        let extra = points.len() % demand;
        let mut start = 0;
        for (slot, &device) in holders[y].iter().enumerate() {
            let take = base + usize::from(slot < extra);
            shards[device].extend_from_slice(&points[start..start + take]);
            start += take;
        }
    }
    for shard in &mut shards {
        shard.sort_unstable();
    }
    Ok(shards)
}

/// Round-robin i.i.d. split over a seeded shuffle.
pub fn partition_iid<T: Scalar>(
    dataset: &Dataset<T>,
    topology: &Topology,
    seed: u64,
) -> Result<Vec<Vec<usize>>, TaskError> {
    let devices = topology.num_devices();
    if dataset.len() < devices {
        return Err(TaskError::InfeasiblePartition(format!(
            "{} points cannot cover {devices} devices",
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng_from_u64(seed));
    let mut shards = vec![Vec::new(); devices];
    for (pos, idx) in order.into_iter().enumerate() {
        shards[pos % devices].push(idx);
    }
    for shard in &mut shards {
        shard.sort_unstable();
    }
    Ok(shards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::make_softmax;
    use crate::topology::{Topology, TrustPolicy};
    use std::collections::BTreeSet;

    fn distinct_labels(d: &Dataset<f64>, shard: &[usize]) -> BTreeSet<usize> {
        shard.iter().map(|&i| d.label(i)).collect()
    }

    #[test]
    fn three_labels_per_device() {
        let data = make_softmax::<f64>(20, 10, 40, 1.0, 1).unwrap();
        let topo = Topology::uniform(10, 5, &TrustPolicy::all(false, 10)).unwrap();
        let shards = partition_noniid(&data, &topo, 3, 9).unwrap();
        assert_eq!(shards.len(), 50);
        let mut seen = BTreeSet::new();
        for s in &shards {
            assert_eq!(distinct_labels(&data, s).len(), 3);
            for &i in s {
                assert!(seen.insert(i), "point {i} assigned twice");
            }
        }
        assert_eq!(shards, partition_noniid(&data, &topo, 3, 9).unwrap());
    }

    #[test]
    fn all_labels_is_unconstrained() {
        let data = make_softmax::<f64>(8, 4, 10, 1.0, 1).unwrap();
        let topo = Topology::uniform(2, 2, &TrustPolicy::all(false, 2)).unwrap();
        let shards = partition_noniid(&data, &topo, 4, 0).unwrap();
        for s in &shards {
            assert_eq!(distinct_labels(&data, s).len(), 4);
        }
        assert_eq!(shards.iter().map(Vec::len).sum::<usize>(), 40);
    }

    #[test]
    fn single_device_gets_only_its_labels() {
        let data = make_softmax::<f64>(10, 10, 3, 1.0, 2).unwrap();
        let topo = Topology::uniform(1, 1, &TrustPolicy::all(true, 1)).unwrap();
        let shards = partition_noniid(&data, &topo, 3, 4).unwrap();
        let labels = distinct_labels(&data, &shards[0]);
        assert_eq!(labels.len(), 3);
        let expected = data.labels().iter().filter(|y| labels.contains(y)).count();
        assert_eq!(shards[0].len(), expected);
    }

    #[test]
    fn too_few_points_is_infeasible() {
        let data = make_softmax::<f64>(4, 2, 2, 1.0, 2).unwrap();
        let topo = Topology::uniform(1, 6, &TrustPolicy::all(true, 1)).unwrap();
        assert!(matches!(
            partition_noniid(&data, &topo, 1, 0),
            Err(TaskError::InfeasiblePartition(_))
        ));
    }
}
