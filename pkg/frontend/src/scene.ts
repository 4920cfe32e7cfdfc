// three.js scene: robot links from URDF visual primitives (collision spheres
// as the fallback, wireframe placeholders when a link has no geometry at
// all), world obstacles, a draggable target gizmo, and the manipulability
// ellipsoid. Poses come exclusively from server state messages.

import * as THREE from 'three';
import { OrbitControls } from 'three/examples/jsm/controls/OrbitControls.js';
import { TransformControls } from 'three/examples/jsm/controls/TransformControls.js';
import { ellipsoidFromEigen } from './ellipsoid';
import type { ModelMessage, ObstacleJson, StateMessage, TransformJson } from './protocol';

const LINK_COLOR = 0x7a9ec2;
const OBSTACLE_COLOR = 0xc97b63;
const TARGET_COLOR = 0x62c46a;
const ELLIPSOID_COLOR = 0xd9c24a;

function applyPose(object: THREE.Object3D, pose: TransformJson): void {
  const [w, x, y, z] = pose.wxyz;
  object.quaternion.set(x, y, z, w);
  object.position.set(pose.pos[0], pose.pos[1], pose.pos[2]);
}

function rpyQuaternion(rpy: number[]): THREE.Quaternion {
  const e = new THREE.Euler(rpy[0], rpy[1], rpy[2], 'ZYX');
  return new THREE.Quaternion().setFromEuler(e);
}

export class ViewerScene {
  readonly scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private renderer: THREE.WebGLRenderer;
  private orbit: OrbitControls;
  private gizmo: TransformControls;
  private linkGroups = new Map<string, THREE.Group>();
  private obstacleMeshes: THREE.Object3D[] = [];
  private targetFrame = new THREE.Group();
  private ellipsoid: THREE.Mesh;
  private ellipsoidVisible = false;
  private targetLink = '';
  private suppressGizmoEvents = false;

  constructor(
    container: HTMLElement,
    private onTargetMoved: (pose: TransformJson) => void,
  ) {
    this.camera = new THREE.PerspectiveCamera(50, 1, 0.01, 100);
    this.camera.position.set(1.6, -1.2, 1.1);
    this.camera.up.set(0, 0, 1);

    this.renderer = new THREE.WebGLRenderer({ antialias: true });
    this.renderer.setClearColor(0x181c20);
    container.appendChild(this.renderer.domElement);

    this.scene.add(new THREE.AmbientLight(0xffffff, 0.6));
    const sun = new THREE.DirectionalLight(0xffffff, 1.4);
    sun.position.set(2, -1, 3);
    this.scene.add(sun);
    const grid = new THREE.GridHelper(4, 20, 0x3a4148, 0x2a3036);
    grid.rotation.x = Math.PI / 2;
    this.scene.add(grid);
    this.scene.add(new THREE.AxesHelper(0.3));

    this.orbit = new OrbitControls(this.camera, this.renderer.domElement);
    this.orbit.target.set(0, 0, 0.4);

    // target gizmo: dragging emits set_target (debounced upstream)
    const axes = new THREE.AxesHelper(0.12);
    this.targetFrame.add(axes);
    const marker = new THREE.Mesh(
      new THREE.SphereGeometry(0.02, 16, 12),
      new THREE.MeshStandardMaterial({ color: TARGET_COLOR }),
    );
    this.targetFrame.add(marker);
    this.scene.add(this.targetFrame);

    this.gizmo = new TransformControls(this.camera, this.renderer.domElement);
    this.gizmo.attach(this.targetFrame);
    this.gizmo.setSize(0.7);
    this.gizmo.addEventListener('dragging-changed', (event) => {
      this.orbit.enabled = !(event as unknown as { value: boolean }).value;
    });
    this.gizmo.addEventListener('objectChange', () => {
      if (this.suppressGizmoEvents) return;
      const p = this.targetFrame.position;
      const q = this.targetFrame.quaternion;
      this.onTargetMoved({ wxyz: [q.w, q.x, q.y, q.z], pos: [p.x, p.y, p.z] });
    });
    this.scene.add(this.gizmo);

    this.ellipsoid = new THREE.Mesh(
      new THREE.SphereGeometry(1, 24, 16),
      new THREE.MeshStandardMaterial({
        color: ELLIPSOID_COLOR,
        transparent: true,
        opacity: 0.35,
      }),
    );
    this.ellipsoid.visible = false;
    this.scene.add(this.ellipsoid);

    const resize = () => {
      const w = container.clientWidth || window.innerWidth;
      const h = container.clientHeight || window.innerHeight;
      this.camera.aspect = w / h;
      this.camera.updateProjectionMatrix();
      this.renderer.setSize(w, h);
    };
    window.addEventListener('resize', resize);
    resize();

    const animate = () => {
      requestAnimationFrame(animate);
      this.orbit.update();
      this.renderer.render(this.scene, this.camera);
    };
    animate();
  }

  setGizmoMode(mode: 'translate' | 'rotate'): void {
    this.gizmo.setMode(mode);
  }

  setEllipsoidVisible(visible: boolean): void {
    this.ellipsoidVisible = visible;
    this.ellipsoid.visible = visible;
  }

  buildRobot(model: ModelMessage): void {
    for (const group of this.linkGroups.values()) {
      this.scene.remove(group);
    }
    this.linkGroups.clear();
    this.targetLink = model.target_link;
    const material = new THREE.MeshStandardMaterial({ color: LINK_COLOR });
    for (const link of model.links) {
      const group = new THREE.Group();
      const visuals = model.visuals[link] ?? [];
      for (const visual of visuals) {
        let geometry: THREE.BufferGeometry;
        if (visual.kind === 'box' && visual.size) {
          geometry = new THREE.BoxGeometry(...(visual.size as [number, number, number]));
        } else if (visual.kind === 'cylinder' && visual.radius && visual.length) {
          geometry = new THREE.CylinderGeometry(visual.radius, visual.radius, visual.length, 24);
          geometry.rotateX(Math.PI / 2); // URDF cylinders extend along z
        } else if (visual.kind === 'sphere' && visual.radius) {
          geometry = new THREE.SphereGeometry(visual.radius, 20, 14);
        } else {
          continue;
        }
        const mesh = new THREE.Mesh(geometry, material);
        mesh.position.fromArray(visual.origin_xyz);
        mesh.quaternion.copy(rpyQuaternion(visual.origin_rpy));
        group.add(mesh);
      }
      const spheres = model.collision_spheres[link] ?? [];
      if (visuals.length === 0) {
        for (const sphere of spheres) {
          const mesh = new THREE.Mesh(
            new THREE.SphereGeometry(sphere.radius, 16, 12),
            material,
          );
          mesh.position.fromArray(sphere.center);
          group.add(mesh);
        }
        if (spheres.length === 0) {
          // no geometry at all: wireframe placeholder, never a crash
          const placeholder = new THREE.Mesh(
            new THREE.BoxGeometry(0.04, 0.04, 0.04),
            new THREE.MeshBasicMaterial({ color: LINK_COLOR, wireframe: true }),
          );
          group.add(placeholder);
        }
      }
      this.scene.add(group);
      this.linkGroups.set(link, group);
    }
  }

  private buildObstacles(obstacles: ObstacleJson[]): void {
    for (const mesh of this.obstacleMeshes) {
      this.scene.remove(mesh);
    }
    this.obstacleMeshes = [];
    const material = new THREE.MeshStandardMaterial({
      color: OBSTACLE_COLOR,
      transparent: true,
      opacity: 0.8,
    });
    for (const obstacle of obstacles) {
      let object: THREE.Object3D;
      if (obstacle.type === 'sphere') {
        object = new THREE.Mesh(new THREE.SphereGeometry(obstacle.radius, 20, 14), material);
        object.position.fromArray(obstacle.center);
      } else if (obstacle.type === 'capsule') {
        const a = new THREE.Vector3().fromArray(obstacle.endpoint_a);
        const b = new THREE.Vector3().fromArray(obstacle.endpoint_b);
        const length = a.distanceTo(b);
        const mesh = new THREE.Mesh(
          new THREE.CapsuleGeometry(obstacle.radius, length, 8, 16),
          material,
        );
        mesh.position.copy(a.clone().add(b).multiplyScalar(0.5));
        mesh.quaternion.setFromUnitVectors(
          new THREE.Vector3(0, 1, 0),
          b.clone().sub(a).normalize(),
        );
        object = mesh;
      } else {
        // half-space: draw its boundary plane
        const mesh = new THREE.Mesh(
          new THREE.PlaneGeometry(4, 4),
          new THREE.MeshBasicMaterial({
            color: OBSTACLE_COLOR,
            transparent: true,
            opacity: 0.15,
            side: THREE.DoubleSide,
          }),
        );
        const n = new THREE.Vector3().fromArray(obstacle.normal).normalize();
        mesh.quaternion.setFromUnitVectors(new THREE.Vector3(0, 0, 1), n);
        mesh.position.copy(n.multiplyScalar(obstacle.offset));
        object = mesh;
      }
      this.scene.add(object);
      this.obstacleMeshes.push(object);
    }
  }

  applyState(state: StateMessage): void {
    for (const [link, pose] of Object.entries(state.link_poses)) {
      const group = this.linkGroups.get(link);
      if (group) {
        applyPose(group, pose);
      }
    }
    if (!this.gizmo.dragging) {
      this.suppressGizmoEvents = true;
      applyPose(this.targetFrame, state.target_pose);
      this.suppressGizmoEvents = false;
    }
    this.buildObstacles(state.obstacles.obstacles);

    const shape = ellipsoidFromEigen(
      state.manipulability.eigenvalues,
      state.manipulability.axes,
      0.15,
    );
    const pose = state.link_poses[this.targetLink];
    if (pose && this.ellipsoidVisible) {
      this.ellipsoid.position.fromArray(pose.pos);
      const basis = new THREE.Matrix4().makeBasis(
        new THREE.Vector3().fromArray(shape.axes[0]),
        new THREE.Vector3().fromArray(shape.axes[1]),
        new THREE.Vector3().fromArray(shape.axes[2]),
      );
      this.ellipsoid.quaternion.setFromRotationMatrix(basis);
      this.ellipsoid.scale.set(
        Math.max(shape.radii[0], 1e-3),
        Math.max(shape.radii[1], 1e-3),
        Math.max(shape.radii[2], 1e-3),
      );
    }
  }
}
