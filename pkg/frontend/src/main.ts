import './style.css';
import { ViewerConnection } from './connection';
import { ControlPanel } from './panel';
import { ViewerScene } from './scene';
import { ViewerStore } from './state';

const sceneHost = document.getElementById('scene')!;
const panelHost = document.getElementById('panel')!;
const errorBar = document.getElementById('errors')!;

const wsUrl = `${location.protocol === 'https:' ? 'wss' : 'ws'}://${location.host}/ws`;

let scene: ViewerScene;
let panel: ControlPanel;

const store = new ViewerStore({
  onModel: (model) => scene.buildRobot(model),
  onState: (state) => {
    scene.applyState(state);
    panel.applyState(state);
  },
  onError: (detail) => {
    errorBar.textContent = detail;
    errorBar.classList.add('visible');
    setTimeout(() => errorBar.classList.remove('visible'), 4000);
  },
});

const connection = new ViewerConnection(
  wsUrl,
  (msg) => store.apply(msg),
  (connected) => panel.setConnected(connected),
);

scene = new ViewerScene(sceneHost, (pose) => {
  connection.send({ type: 'set_target', pose });
});
panel = new ControlPanel(
  panelHost,
  (edit) => connection.send(edit),
  (visible) => scene.setEllipsoidVisible(visible),
  (mode) => scene.setGizmoMode(mode),
);

connection.open();
