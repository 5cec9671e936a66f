// 3D orbit view of the current point cloud, via three.js. Gracefully
// disabled when WebGL is unavailable (headless tests).

import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";

import { FrameView } from "./state.js";

export class PointsView {
  private renderer: THREE.WebGLRenderer | null = null;
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private controls: OrbitControls | null = null;
  private points: THREE.Points | null = null;

  constructor(container: HTMLElement, width = 640, height = 420) {
    this.camera = new THREE.PerspectiveCamera(55, width / height, 0.1, 500);
    this.camera.position.set(-18, -18, 14);
    this.camera.up.set(0, 0, 1);
    try {
      this.renderer = new THREE.WebGLRenderer({ antialias: true });
      this.renderer.setSize(width, height);
      container.appendChild(this.renderer.domElement);
      this.controls = new OrbitControls(this.camera, this.renderer.domElement);
      this.controls.target.set(10, 0, 0);
      this.scene.background = new THREE.Color(0x10141a);
      this.scene.add(new THREE.AxesHelper(3));
      const loop = () => {
        requestAnimationFrame(loop);
        this.controls?.update();
        this.renderer?.render(this.scene, this.camera);
      };
      loop();
    } catch {
      this.renderer = null; // headless: rendering disabled, state logic unaffected
    }
  }

  get enabled(): boolean {
    return this.renderer !== null;
  }

  setFrame(frame: FrameView): void {
    if (this.points !== null) {
      this.scene.remove(this.points);
      this.points.geometry.dispose();
      (this.points.material as THREE.Material).dispose();
      this.points = null;
    }
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.BufferAttribute(frame.cloud.xyz, 3));
    const colors = new Float32Array(frame.cloud.count * 3);
    for (let i = 0; i < frame.cloud.count; i++) {
      const v = 0.35 + 0.65 * frame.cloud.intensity[i];
      colors[i * 3] = v;
      colors[i * 3 + 1] = v;
      colors[i * 3 + 2] = Math.min(1, v + 0.15);
    }
    geometry.setAttribute("color", new THREE.BufferAttribute(colors, 3));
    const material = new THREE.PointsMaterial({ size: 0.25, vertexColors: true });
    this.points = new THREE.Points(geometry, material);
    this.scene.add(this.points);
  }
}
